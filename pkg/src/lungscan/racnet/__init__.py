"""Variable-length CT scan classifier with routing and a masked dense head."""

from .classifier import (
    ClassifierOutput,
    PreparedScan,
    SequenceFeatures,
    batch_loss,
    classify_scan,
    embed_and_sequence,
    forward,
    predict_prepared,
    prepare_scan,
    sequence_loss,
    train_step,
)
from .model import RACNet, RACNetConfig, SliceEncoder
from .routing import RoutingPlan, make_plan, plan_aligned, plan_first_l
from .training import (
    TrainConfig,
    build_model,
    fit,
    load_checkpoint,
    predict,
    save_checkpoint,
    seed_everything,
)

__all__ = [
    "ClassifierOutput",
    "PreparedScan",
    "RACNet",
    "RACNetConfig",
    "RoutingPlan",
    "SequenceFeatures",
    "SliceEncoder",
    "TrainConfig",
    "batch_loss",
    "build_model",
    "classify_scan",
    "embed_and_sequence",
    "fit",
    "forward",
    "load_checkpoint",
    "make_plan",
    "plan_aligned",
    "plan_first_l",
    "predict",
    "predict_prepared",
    "prepare_scan",
    "save_checkpoint",
    "seed_everything",
    "sequence_loss",
    "train_step",
]
