"""Training: v-prediction objective, trainer loop and few-shot fine-tuning."""

from .config import FEW_SHOT_OVERRIDES, TrainConfig
from .data import ExtractionDataset
from .log import TRAINING_LOG, TrainingLog
from .step import draw_training_noise, training_step
from .trainer import (
    BEST_CHECKPOINT,
    LAST_CHECKPOINT,
    TrainResult,
    Trainer,
    ensure_class_support,
    finetune,
    prepare_plugins,
    train,
)
