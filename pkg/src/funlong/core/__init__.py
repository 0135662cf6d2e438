from funlong.core.data import Dataset, HistoryPrefix, Trajectory, align_columns, history_prefix
from funlong.core.errors import (
    DegenerateDesignError,
    FunlongError,
    InternalSimulationError,
    InvalidArgumentError,
    InvalidConfigError,
    PositivityError,
    TooLargeError,
    UnsupportedOperationError,
)
from funlong.core.grid import Partition, make_infinite_partition, make_uniform_partition, mesh, refine
from funlong.core.processes import ConstantProcess, FunctionProcess, NuisanceProcess, PerturbedProcess
from funlong.core.regimes import (
    DiscreteRegime,
    GaussianRegime,
    PointMassRegime,
    Regime,
    SignedRegime,
    bernoulli_regime,
    check_normalization,
    contrast,
    expect_over_regime,
)
from funlong.core.targets import (
    TargetFunctional,
    constant_target,
    outcome_at_if_alive,
    survival_beyond,
    terminal_outcome,
)
from funlong.core.view import FBatch, GBatch, PartitionView

__all__ = [
    "Dataset", "HistoryPrefix", "Trajectory", "align_columns", "history_prefix",
    "FunlongError", "InvalidArgumentError", "InvalidConfigError", "PositivityError",
    "DegenerateDesignError", "TooLargeError", "UnsupportedOperationError",
    "InternalSimulationError",
    "Partition", "make_uniform_partition", "make_infinite_partition", "mesh", "refine",
    "NuisanceProcess", "FunctionProcess", "ConstantProcess", "PerturbedProcess",
    "Regime", "PointMassRegime", "DiscreteRegime", "GaussianRegime", "SignedRegime",
    "bernoulli_regime", "contrast", "expect_over_regime", "check_normalization",
    "TargetFunctional", "constant_target", "terminal_outcome", "survival_beyond",
    "outcome_at_if_alive",
    "PartitionView", "GBatch", "FBatch",
]
