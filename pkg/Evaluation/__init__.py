"""Evaluation: Frechet distance, paired KL, embedding cosine and the batch harness."""

from .classifier import ClassifierPlugin, ToyClassifier
from .harness import MODES, evaluate, guidance_sweep
from .metrics import FD_EPS, KL_EPS, embedding_cosine, frechet_distance, paired_kl
from .report import (
    CSV_COLUMNS,
    EvalReport,
    ItemRecord,
    export_csv,
    read_report,
    read_sweep,
    write_report,
    write_sweep,
)
