"""Exception hierarchy. The CLI maps these onto process exit codes."""


class StateTrackError(Exception):
    """Base class for all package errors."""


class ValidationError(StateTrackError):
    """Malformed input data: files, schemas, scenarios, annotations, configs."""


class MalformedRleError(ValidationError):
    """RLE text or run list violating the canonical encoding."""


class BackendError(StateTrackError):
    """A perception backend failed to answer a contract call."""


class BundleLoadError(ValidationError):
    """Replay bundle missing or structurally corrupt."""


class BundleIncompleteError(BackendError):
    """Replay bundle lacks a record for a query the pipeline made."""

    def __init__(self, key: str):
        super().__init__(f"replay bundle has no record for {key}")
        self.key = key


class JudgeProtocolError(StateTrackError):
    """External judge reply did not contain a single integer."""
