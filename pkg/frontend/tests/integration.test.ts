// End-to-end acceptance flow against a real review service: approve 5 of
// the top 10 items, counters must match GET /projects/{id} after one
// reconciliation, the export must have exactly 5 rows, and a rescore
// round-trip must re-rank the queue without altering decided counts.
//
// Requires the python package to be installed (pip install -e ..); the
// whole file skips when it is not.

import { spawn, spawnSync, ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { createServer } from 'node:net';
import { tmpdir } from 'node:os';
import { join, resolve } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { createClient } from '../src/api.js';
import { ReviewBoard } from '../src/state.js';

const REPO_ROOT = resolve(__dirname, '..', '..');
const PYTHON = 'python3';

const pythonReady =
  spawnSync(PYTHON, ['-c', 'import tracekit'], { timeout: 30_000 }).status === 0;

function freePort(): Promise<number> {
  return new Promise((resolvePort, reject) => {
    const server = createServer();
    server.once('error', reject);
    server.listen(0, '127.0.0.1', () => {
      const address = server.address();
      if (address && typeof address === 'object') {
        const port = address.port;
        server.close(() => resolvePort(port));
      } else {
        reject(new Error('no port'));
      }
    });
  });
}

async function waitForService(base: string, proc: ChildProcess): Promise<void> {
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited with ${proc.exitCode}`);
    }
    try {
      const response = await fetch(`${base}/projects`);
      if (response.ok) {
        return;
      }
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error('service did not come up');
}

describe.skipIf(!pythonReady)('review UI flow against a live service', () => {
  let proc: ChildProcess;
  let base: string;
  let workDir: string;

  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), 'tracekit-ui-'));

    // CM1-shaped synthetic corpus (22 x 53 = 1166 candidates)
    const generate = spawnSync(
      PYTHON,
      [
        '-c',
        [
          'import sys',
          `sys.path.insert(0, ${JSON.stringify(join(REPO_ROOT, 'tests'))})`,
          'import synth',
          'from tracekit.corpus import export_dataset',
          `export_dataset(synth.cm1_like().dataset, ${JSON.stringify(join(workDir, 'cm1'))})`,
        ].join('\n'),
      ],
      { timeout: 60_000 },
    );
    expect(generate.status, String(generate.stderr)).toBe(0);

    const port = await freePort();
    base = `http://127.0.0.1:${port}`;
    proc = spawn(
      PYTHON,
      ['-m', 'tracekit.cli', 'serve', '--home', join(workDir, 'home'), '--port', String(port)],
      { stdio: 'ignore' },
    );
    await waitForService(base, proc);

    const created = await fetch(`${base}/projects`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({
        project_id: 'cm1',
        dataset_manifest_path: join(workDir, 'cm1', 'manifest.json'),
        scorer: 'vsm',
      }),
    });
    expect(created.status).toBe(201);
  });

  afterAll(() => {
    proc?.kill('SIGKILL');
    rmSync(workDir, { recursive: true, force: true });
  });

  it('runs the vetting loop end to end', async () => {
    const client = createClient(base);
    const board = new ReviewBoard(client, 'cm1', 10, { reviewer: 'amy', pollIntervalMs: 100 });
    await board.load();

    let state = board.state();
    expect(state.queue).toHaveLength(10);
    expect(state.counters?.items).toBe(1166);
    expect(state.counters?.pending).toBe(1166);

    // approve 5 of the top 10
    const targets = state.queue.slice(0, 5).map((item) => item.pair_id);
    const scoresBefore = new Map(state.queue.map((item) => [item.pair_id, item.score]));
    for (const pairId of targets) {
      expect(await board.decide(pairId, 'approve')).toBe(true);
    }

    // counters match the server after the decide-triggered reconciliation
    state = board.state();
    const summary = await client.getProject('cm1');
    expect(state.counters).toEqual(summary.metrics);
    expect(summary.metrics.approved).toBe(5);
    expect(summary.metrics.pending).toBe(1161);
    expect(state.queue).toHaveLength(10); // topped back up to k
    for (const pairId of targets) {
      expect(state.queue.some((item) => item.pair_id === pairId)).toBe(false);
    }

    // export has exactly the 5 approved rows
    const csv = await board.fetchExport();
    const lines = csv.trim().split(/\r?\n/);
    expect(lines[0]).toBe('source_id,target_id');
    expect(lines).toHaveLength(6);
    const exported = new Set(lines.slice(1).map((row) => row.split(',').slice(0, 2).join('::')));
    for (const pairId of targets) {
      const [, source, target] = pairId.split('::');
      expect(exported.has(`${source}::${target}`)).toBe(true);
    }

    // rescore with a different scorer: queue re-ranks, decided counts stay
    const mockScorer = join(REPO_ROOT, 'tests', 'mock_scorer.py');
    const ok = await board.rescoreAndReload({
      kind: 'external',
      endpoint: `cmd:${PYTHON} ${mockScorer} overlap`,
    });
    expect(ok).toBe(true);

    state = board.state();
    expect(state.counters?.approved).toBe(5);
    expect(state.counters?.decided).toBe(5);
    expect(state.queue).toHaveLength(10);
    for (const pairId of targets) {
      expect(state.queue.some((item) => item.pair_id === pairId)).toBe(false);
    }
    const changed = state.queue.some(
      (item) => scoresBefore.has(item.pair_id) && scoresBefore.get(item.pair_id) !== item.score,
    );
    const reordered =
      JSON.stringify(state.queue.map((i) => i.pair_id)) !==
      JSON.stringify([...scoresBefore.keys()].filter((id) => !targets.includes(id)));
    expect(changed || reordered).toBe(true);
  });

  it('keeps a recorded session replayable: same decisions, same export', async () => {
    const exportNow = await createClient(base).fetchExport('cm1');
    const again = await createClient(base).fetchExport('cm1');
    expect(again).toBe(exportNow);
  });
});
