"""HTTP/JSON API for the review loop.

All state lives in the :class:`~tracekit.review.ProjectStore`; this module is
a thin shell mapping endpoints to store calls and domain errors to status
codes (404 unknown ids, 409 duplicate project or busy rescore, 422 invalid
verdict/pair/request).
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path
from typing import Union

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .corpus import dataset_from_inline, load_dataset
from .errors import ReviewError, ScorerProtocolError, TracekitError
from .review import ProjectStore
from .scoring import ScorerSpec, parse_scorer_arg
from .textpipe import TokenizerProfile


class ScorerModel(BaseModel):
    name: str | None = None
    kind: str = "vsm"
    endpoint: str | None = None
    max_batch: int = 64
    timeout_s: float = 120.0
    profile_override: dict | None = None

    def to_spec(self) -> ScorerSpec:
        name = self.name or (self.kind if self.kind == "vsm" else f"external:{self.endpoint}")
        override = (
            TokenizerProfile.from_json_dict(self.profile_override)
            if self.profile_override
            else None
        )
        return ScorerSpec(
            name=name,
            kind=self.kind,
            endpoint=self.endpoint,
            max_batch=self.max_batch,
            timeout_s=self.timeout_s,
            profile_override=override,
        )


ScorerField = Union[str, ScorerModel]


def _scorer_spec(scorer: ScorerField) -> ScorerSpec:
    try:
        if isinstance(scorer, str):
            return parse_scorer_arg(scorer)
        return scorer.to_spec()
    except TracekitError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


class CreateProjectRequest(BaseModel):
    project_id: str | None = None
    dataset_manifest_path: str | None = None
    dataset: dict | None = None  # inline dataset JSON
    scorer: ScorerField = "vsm"


class DecisionRequest(BaseModel):
    pair_id: str
    verdict: str
    reviewer: str


class RescoreRequest(BaseModel):
    scorer: ScorerField = "vsm"


def create_app(home: str | Path) -> FastAPI:
    """Build the review service over a project-store home directory."""
    store = ProjectStore(home)
    app = FastAPI(title="tracekit review service")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    jobs: dict[str, dict] = {}
    jobs_lock = threading.Lock()

    def require_project(project_id: str) -> None:
        if not store.exists(project_id):
            raise HTTPException(status_code=404, detail=f"unknown project: {project_id}")

    @app.post("/projects", status_code=201)
    def create_project(request: CreateProjectRequest) -> dict:
        if (request.dataset is None) == (request.dataset_manifest_path is None):
            raise HTTPException(
                status_code=422,
                detail="provide exactly one of dataset_manifest_path or dataset",
            )
        if request.project_id and store.exists(request.project_id):
            raise HTTPException(
                status_code=409, detail=f"project exists: {request.project_id}"
            )
        spec = _scorer_spec(request.scorer)
        try:
            if request.dataset is not None:
                dataset = dataset_from_inline(request.dataset)
            else:
                dataset, _ = load_dataset(request.dataset_manifest_path or "")
            project = store.create_project(dataset, spec, project_id=request.project_id)
        except ReviewError as exc:
            status = 409 if "project exists" in str(exc) else 422
            raise HTTPException(status_code=status, detail=str(exc)) from exc
        except TracekitError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"project_id": project.id}

    @app.get("/projects")
    def list_projects(offset: int = Query(0, ge=0), limit: int = Query(50, ge=1)) -> dict:
        ids = store.list_project_ids()
        page = []
        for project_id in ids[offset : offset + limit]:
            project = store.get(project_id)
            page.append(
                {
                    "id": project.id,
                    "dataset": project.dataset.name,
                    "scorer": project.scorer,
                    "created_ts_ms": project.created_ts_ms,
                    **project.counts(),
                }
            )
        return {"projects": page, "total": len(ids)}

    @app.get("/projects/{project_id}")
    def project_summary(project_id: str) -> dict:
        require_project(project_id)
        project = store.get(project_id)
        return {
            "id": project.id,
            "dataset": project.dataset.name,
            "scorer": project.scorer,
            "created_ts_ms": project.created_ts_ms,
            "metrics": store.vetted_metrics(project_id),
        }

    @app.get("/projects/{project_id}/batch")
    def batch(
        project_id: str,
        k: int = Query(20, ge=1),
        offset: int = Query(0, ge=0),
        limit: int | None = Query(None, ge=1),
    ) -> dict:
        require_project(project_id)
        items = store.next_batch(project_id, k=limit or k, offset=offset)
        counts = store.get(project_id).counts()
        return {"items": [item.to_json_dict() for item in items], "pending_total": counts["pending"]}

    @app.post("/projects/{project_id}/decisions")
    def decide(project_id: str, request: DecisionRequest) -> dict:
        require_project(project_id)
        try:
            entry = store.record_decision(
                project_id, request.pair_id, request.verdict, request.reviewer
            )
        except ReviewError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return entry.to_json_dict()

    @app.get("/projects/{project_id}/export")
    def export(project_id: str, query: str | None = None) -> Response:
        require_project(project_id)
        csv_text = store.export_training(project_id, query_id=query)
        return Response(
            content=csv_text,
            media_type="text/csv",
            headers={"Content-Disposition": f'attachment; filename="{project_id}-approved.csv"'},
        )

    @app.post("/projects/{project_id}/rescore", status_code=202)
    def rescore(project_id: str, request: RescoreRequest) -> dict:
        require_project(project_id)
        spec = _scorer_spec(request.scorer)
        with jobs_lock:
            running = any(
                j for j in jobs.values() if j["project_id"] == project_id and j["state"] == "running"
            )
            if running:
                raise HTTPException(status_code=409, detail="a rescore is already running")
            job_id = uuid.uuid4().hex[:12]
            jobs[job_id] = {"project_id": project_id, "state": "running", "error": None}

        def work() -> None:
            try:
                store.rescore(project_id, spec)
                with jobs_lock:
                    jobs[job_id]["state"] = "done"
            except (TracekitError, ScorerProtocolError) as exc:
                with jobs_lock:
                    jobs[job_id]["state"] = "failed"
                    jobs[job_id]["error"] = str(exc)

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job_id, "status_url": f"/projects/{project_id}/jobs/{job_id}"}

    @app.get("/projects/{project_id}/jobs/{job_id}")
    def job_status(project_id: str, job_id: str) -> dict:
        require_project(project_id)
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None or job["project_id"] != project_id:
                raise HTTPException(status_code=404, detail=f"unknown job: {job_id}")
            return {"job_id": job_id, "state": job["state"], "error": job["error"]}

    return app


def serve(home: str | Path, host: str = "127.0.0.1", port: int = 8340) -> None:
    """Run the review service under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(home), host=host, port=port, log_level="info")
