"""HTTP service: measurement ingest, model training, inference."""

from .app import create_app
from .store import DuplicateRecordError, ModelRegistry, RecordStore, StoredRecord

__all__ = [
    "create_app",
    "RecordStore",
    "ModelRegistry",
    "StoredRecord",
    "DuplicateRecordError",
]
