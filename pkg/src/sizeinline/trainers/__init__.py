from .bc import train_bc
from .common import TrainerConfig, TrainReport, IterationRecord
from .es import train_es
from .evaluate import EvalReport, evaluate_policy
from .pg import train_pg

__all__ = [
    "EvalReport",
    "IterationRecord",
    "TrainReport",
    "TrainerConfig",
    "evaluate_policy",
    "train_bc",
    "train_es",
    "train_pg",
]
