"""Exporter of dense image features and prompt-template text banks."""

from .encoders import ClipEncoder, HashProjectionEncoder, make_encoder
from .export import ExtractorConfig, export_features, export_text_bank
from .templates import IMAGENET_TEMPLATES
from .tensorio import TensorFormatError, read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "ClipEncoder",
    "ExtractorConfig",
    "HashProjectionEncoder",
    "IMAGENET_TEMPLATES",
    "TensorFormatError",
    "export_features",
    "export_text_bank",
    "make_encoder",
    "read_tensor",
    "write_tensor",
    "__version__",
]
