"""Model package: the skip-connected diffusion transformer and its checkpoints."""

from .backbone import PRESETS, BackboneConfig, ExtractionTransformer, rope_rotate, time_embedding
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .pipeline import Extractor
from .summary import ModelSummary, count_parameters, summarize_model
