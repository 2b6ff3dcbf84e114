"""Exception hierarchy shared across the toolkit.

Every domain failure raises a :class:`TracekitError` subclass so the CLI can
map them to exit code 1 while genuine bugs surface as ordinary tracebacks.
"""

from __future__ import annotations


class TracekitError(Exception):
    """Base class for all domain errors raised by tracekit."""


class IngestError(TracekitError):
    """Manifest, layer file, or answer file violates the ingestion contract."""


class UnknownIdError(TracekitError):
    """A query, artifact, or pair id does not exist in the dataset."""


class ScorerProtocolError(TracekitError):
    """An external scorer violated the wire protocol (timeout, shape, range)."""


class UndefinedMetricError(TracekitError):
    """Metric has no defined value for this input (e.g. no true labels)."""


class ReviewError(TracekitError):
    """Review project persistence or state-transition failure."""
