"""Open-loop trajectory optimization for unknown deterministic dynamics."""

from .algorithms import (
    CrossEntropyOptimizer,
    FiniteDifferenceOptimizer,
    LearningCurve,
    ModelBasedOptimizer,
    OffTrajectoryOptimizer,
    OnTrajectoryOptimizer,
    OracleOptimizer,
    PlannerOptimizer,
    RunConfig,
)
from .envs import (
    PendulumParams,
    Trajectory,
    augment_terminal_reward,
    linear_env,
    lqr_env,
    pendulum_env,
    rollout,
)
from .pontryagin import backward_pass, true_gradient

__version__ = "0.1.0"

__all__ = [
    "CrossEntropyOptimizer",
    "FiniteDifferenceOptimizer",
    "LearningCurve",
    "ModelBasedOptimizer",
    "OffTrajectoryOptimizer",
    "OnTrajectoryOptimizer",
    "OracleOptimizer",
    "PendulumParams",
    "PlannerOptimizer",
    "RunConfig",
    "Trajectory",
    "augment_terminal_reward",
    "backward_pass",
    "linear_env",
    "lqr_env",
    "pendulum_env",
    "rollout",
    "true_gradient",
]
