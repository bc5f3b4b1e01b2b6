"""Multi-task RL with a shared policy and a task-specific action-correction policy."""

from .envs import CmdpSuite, TaskSpec, get_suite
from .policies import CorrectionFnKind, correct
from .trainer import TrainerConfig, TSACTrainer

__all__ = ["CmdpSuite", "TaskSpec", "get_suite", "CorrectionFnKind", "correct", "TrainerConfig", "TSACTrainer"]
