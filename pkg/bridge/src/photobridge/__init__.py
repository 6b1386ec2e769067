"""Export real vision-language embeddings and PhotoChat corpora into the
retrieval engine's file formats. The engine never touches ML frameworks;
this package is where they live."""

from .encoders import ClipEncoder, DummyEncoder, load_encoder
from .errors import BridgeError, ModelLoadError, SchemaError
from .exports import BridgeJob, export_image_embeddings, export_text_embeddings
from .photochat import convert_record, export_photochat, export_split, parse_objects
from .store import image_key, text_key, write_store

__all__ = [
    "BridgeError",
    "BridgeJob",
    "ClipEncoder",
    "DummyEncoder",
    "ModelLoadError",
    "SchemaError",
    "convert_record",
    "export_image_embeddings",
    "export_photochat",
    "export_split",
    "export_text_embeddings",
    "image_key",
    "load_encoder",
    "parse_objects",
    "text_key",
    "write_store",
]
