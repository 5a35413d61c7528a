"""Sparse 3-way tensor completion with PID-controlled non-negative latent factors."""

__version__ = "0.1.0"

from .config import Hyperparams, RunConfig  # noqa: E402
from .factors import (  # noqa: E402
    FactorSet,
    init_factors,
    instance_gradients,
    objective,
    predict,
    sigmoid,
)
from .pid import ControllerState, apply_instance_update, discrete_pid  # noqa: E402
from .sparse_tensor import (  # noqa: E402
    ScalingParams,
    SparseTensor,
    SplitSets,
    from_entries,
    scale_linear,
    split,
    synth_low_rank,
    unscale,
)
from .trainer import (  # noqa: E402
    Metrics,
    TrainReport,
    ablate,
    evaluate,
    impute,
    sweep,
    train,
    train_split,
)

__all__ = [
    "ControllerState",
    "FactorSet",
    "Hyperparams",
    "Metrics",
    "RunConfig",
    "ScalingParams",
    "SparseTensor",
    "SplitSets",
    "TrainReport",
    "ablate",
    "apply_instance_update",
    "discrete_pid",
    "evaluate",
    "from_entries",
    "impute",
    "init_factors",
    "instance_gradients",
    "objective",
    "predict",
    "scale_linear",
    "sigmoid",
    "split",
    "sweep",
    "synth_low_rank",
    "train",
    "train_split",
    "unscale",
]
