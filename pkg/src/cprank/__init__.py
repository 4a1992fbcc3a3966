"""Tensor rank estimation and CP decomposition by block coordinate descent."""
from .errors import (
    ConfigError,
    CPRankError,
    DimensionError,
    FormatError,
    InputError,
    LengthError,
    ModeError,
    NumericalError,
    SingularityError,
    SizeError,
)
from .kruskal import (
    KruskalModel,
    RankEstimate,
    compact,
    count_rank,
    design_matrix,
    gram,
    reconstruct,
    residual_error,
)
from .solver import (
    IterTrace,
    SolveResult,
    SolverConfig,
    refit,
    solve,
    solve_als_baseline,
)
from .synth import SynthSpec, default_rank_bound, make_ground_truth
from .tensor import DenseTensor3, fold, khatri_rao, kron_vec, outer3, unfold

__version__ = "0.1.0"
