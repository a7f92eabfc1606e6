"""Export perception-model outputs for video clips into replay bundles."""

__version__ = "0.1.0"

from .export import ExportConfig, ExportError, export_bundle  # noqa: F401
from .verify import VerifyReport, verify_bundle  # noqa: F401
