"""Transformer multi-task learning for crisis tweet categorisation and prioritisation."""

from .corpus import GoldRecord, RunRecord, load_gold, load_run, split_train_dev, write_run
from .ensemble import EnsembleConfig, PriorityStrategy, TypeStrategy, ensemble_runs
from .errors import MetricWarning, TrainingError, ValidationError
from .metrics import MetricReport, evaluate_all
from .model import Checkpoint, ModelConfig, load_checkpoint, predict_run, save_checkpoint
from .ontology import PriorityLevel, default_ontology, priority_to_score, score_to_priority
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "GoldRecord", "RunRecord", "load_gold", "load_run", "split_train_dev", "write_run",
    "EnsembleConfig", "PriorityStrategy", "TypeStrategy", "ensemble_runs",
    "MetricWarning", "TrainingError", "ValidationError",
    "MetricReport", "evaluate_all",
    "Checkpoint", "ModelConfig", "load_checkpoint", "predict_run", "save_checkpoint",
    "PriorityLevel", "default_ontology", "priority_to_score", "score_to_priority",
    "TrainConfig", "train",
]
