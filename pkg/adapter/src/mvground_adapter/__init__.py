"""Model-backed asset export for the multi-view grounding pipeline.

Three capabilities, all producing files and wire messages in the
pipeline's own formats: embedding export for frames and queries, a
stdio oracle server for view selection / relevance / segmentation, and
depth-and-pose export for images-only captures. Dry-run mode keeps
everything deterministic and backend-free.
"""

from .config import (AdapterConfig, DEFAULT_PROMPTS, config_from_record,
                     load_adapter_config, save_adapter_config, validate_backends)
from .encode import export_embeddings, seeded_unit_vector
from .errors import AdapterError, BackendError, ConfigInvalid
from .reconstruct import export_reconstruction_inputs
from .serve import serve_stdio

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "BackendError",
    "ConfigInvalid",
    "DEFAULT_PROMPTS",
    "config_from_record",
    "export_embeddings",
    "export_reconstruction_inputs",
    "load_adapter_config",
    "save_adapter_config",
    "seeded_unit_vector",
    "serve_stdio",
    "validate_backends",
]
