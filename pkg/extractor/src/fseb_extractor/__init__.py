"""Image-to-FSEB embedding extraction."""

from .encoders import Encoder, HfClipEncoder, RandomProjectionEncoder, get_encoder
from .extract import ExtractionManifest, ExtractionResult, extract, read_metadata
from .fseb import write_store

__version__ = "0.1.0"

__all__ = [
    "Encoder",
    "ExtractionManifest",
    "ExtractionResult",
    "HfClipEncoder",
    "RandomProjectionEncoder",
    "extract",
    "get_encoder",
    "read_metadata",
    "write_store",
]
