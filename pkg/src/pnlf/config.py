"""Hyperparameters, protocol defaults and the flat ``key = value`` config format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .factors import INIT_HIGH, INIT_LOW, REG_MODES
from .sparse_tensor import DEFAULT_TARGET_MAX

STOP_METRICS = ("rmse", "mae")
FIRST_VISIT_MODES = ("zero", "literal")

DEFAULT_RATIOS = (0.6, 0.2, 0.2)
DEFAULT_SEED = 0
DEFAULT_REPEATS = 1


@dataclass(frozen=True)
class Hyperparams:
    """Training configuration.

    ``eta`` is both the learning rate and the proportional gain. ``c_i`` and
    ``c_d`` weight the integral and derivative terms; with both at zero the
    optimizer is plain SGD. ``alpha`` is the integral decay.
    """

    eta: float = 0.05
    lam: float = 0.001
    c_i: float = 0.3
    c_d: float = 0.1
    alpha: float = 0.2
    rank: int = 20
    max_epochs: int = 200
    tol: float = 1e-6
    reg_mode: str = "analytic"
    stop_metric: str = "rmse"
    first_visit_derivative: str = "zero"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        for name in ("lam", "c_i", "c_d", "tol"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValueError("rank must be a positive integer")
        if int(self.max_epochs) != self.max_epochs or self.max_epochs < 0:
            raise ValueError("max_epochs must be a non-negative integer")
        if self.reg_mode not in REG_MODES:
            raise ValueError(f"reg_mode must be one of {REG_MODES}")
        if self.stop_metric not in STOP_METRICS:
            raise ValueError(f"stop_metric must be one of {STOP_METRICS}")
        if self.first_visit_derivative not in FIRST_VISIT_MODES:
            raise ValueError(f"first_visit_derivative must be one of {FIRST_VISIT_MODES}")

    @property
    def pid_enabled(self) -> bool:
        return self.c_i != 0 or self.c_d != 0

    def replace(self, **changes) -> "Hyperparams":
        return dataclasses.replace(self, **changes)

    def without_pid(self) -> "Hyperparams":
        return self.replace(c_i=0.0, c_d=0.0)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class RunConfig:
    """Everything the CLI needs besides file paths."""

    hyper: Hyperparams = field(default_factory=Hyperparams)
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = DEFAULT_SEED
    repeats: int = DEFAULT_REPEATS
    clamp: bool = False
    target_max: float = DEFAULT_TARGET_MAX
    init_range: tuple[float, float] = (INIT_LOW, INIT_HIGH)

    def snapshot(self) -> dict:
        d = self.hyper.to_dict()
        d.update(
            ratios=list(self.ratios),
            seed=self.seed,
            repeats=self.repeats,
            clamp=self.clamp,
            target_max=self.target_max,
            init_range=list(self.init_range),
        )
        return d


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.replace(":", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise ValueError(f"ratios need three numbers, got {text!r}")
    return tuple(parts)


# config-file key -> (field name, parser)
HYPER_KEYS = {
    "eta": ("eta", float),
    "lambda": ("lam", float),
    "c_i": ("c_i", float),
    "c_d": ("c_d", float),
    "alpha": ("alpha", float),
    "rank": ("rank", int),
    "max_epochs": ("max_epochs", int),
    "tol": ("tol", float),
    "reg_mode": ("reg_mode", str),
    "stop_metric": ("stop_metric", str),
    "first_visit_derivative": ("first_visit_derivative", str),
}
RUN_KEYS = {
    "ratios": ("ratios", parse_ratios),
    "seed": ("seed", int),
    "repeats": ("repeats", int),
    "clamp": ("clamp", _parse_bool),
    "target_max": ("target_max", float),
}
CONFIG_KEYS = tuple(HYPER_KEYS) + tuple(RUN_KEYS)


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(values: dict[str, object], base: RunConfig | None = None) -> RunConfig:
    """Overlay parsed settings (strings or typed values) on ``base``."""
    base = base or RunConfig()
    hyper_changes, run_changes = {}, {}
    for key, value in values.items():
        if value is None:
            continue
        if key in HYPER_KEYS:
            name, conv = HYPER_KEYS[key]
            hyper_changes[name] = conv(value) if isinstance(value, str) else value
        elif key in RUN_KEYS:
            name, conv = RUN_KEYS[key]
            run_changes[name] = conv(value) if isinstance(value, str) else value
        else:
            raise ValueError(f"unknown setting {key!r}")
    hyper = base.hyper.replace(**hyper_changes)
    return dataclasses.replace(base, hyper=hyper, **run_changes)
