"""Configuration dataclasses and the flat ``key=value`` config file format.

Defaults reproduce the published parameter settings: Adam for 100 epochs
with learning rate 1e-3 and weight decay 5e-4, hidden width 64, dropout 0.1
after the first convolution, ``mu = 1e-10``, k swept over 2..15, 3 outer folds.
"""

import dataclasses
from dataclasses import dataclass, field

from .errors import ValidationError
from .features import METHODS
from .spd import CLAMP_MODES, DEFAULT_MU

TARGETS = ("fiq", "viq")


@dataclass(frozen=True)
class SelectionConfig:
    k: int = 10
    inner_folds: int = 5
    method: str = "g"
    target: str = "fiq"
    seed: int = 0
    ridge: float = 0.0
    select_count: int | None = None  # final extraction size; None means k
    mu: float = DEFAULT_MU

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.inner_folds < 2:
            raise ValidationError(f"inner_folds must be >= 2, got {self.inner_folds}")
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.target not in TARGETS:
            raise ValidationError(f"unknown target {self.target!r}; expected one of {TARGETS}")
        if self.ridge < 0:
            raise ValidationError(f"ridge must be nonnegative, got {self.ridge}")
        if self.select_count is not None and self.select_count < 1:
            raise ValidationError(f"select_count must be >= 1, got {self.select_count}")

    @property
    def n_select(self):
        return self.k if self.select_count is None else self.select_count


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 0.001
    weight_decay: float = 0.0005
    dropout: float = 0.1
    hidden: int = 64
    mu: float = DEFAULT_MU
    clamp: str = "entries"
    seed: int = 0
    standardize_targets: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr > 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if not 0 <= self.dropout < 1:
            raise ValidationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.hidden < 1:
            raise ValidationError(f"hidden must be >= 1, got {self.hidden}")
        if not self.mu > 0:
            raise ValidationError(f"mu must be positive, got {self.mu}")
        if self.clamp not in CLAMP_MODES:
            raise ValidationError(f"unknown clamp mode {self.clamp!r}; expected one of {CLAMP_MODES}")


@dataclass(frozen=True)
class ExperimentConfig:
    outer_folds: int = 3
    inner_folds: int = 5
    k_values: tuple = tuple(range(2, 16))
    method: str = "g"
    target: str = "fiq"
    seed: int = 0
    selection: bool = True
    ridge: float = 0.0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.outer_folds < 2:
            raise ValidationError(f"outer_folds must be >= 2, got {self.outer_folds}")
        if not self.k_values:
            raise ValidationError("k_values must be nonempty")
        # reuse SelectionConfig's checks for the shared fields
        for k in self.k_values:
            self.selection_config(k, seed=self.seed)

    def selection_config(self, k, seed):
        return SelectionConfig(
            k=k,
            inner_folds=self.inner_folds,
            method=self.method,
            target=self.target,
            seed=seed,
            ridge=self.ridge,
            mu=self.train.mu,
        )


@dataclass(frozen=True)
class SynthSpec:
    n: int = 60
    d: int = 16
    clusters: int = 3
    centers: tuple = (85.0, 100.0, 115.0)
    within_std: float = 10.0
    outliers: int = 0
    outlier_offset: float = 30.0
    noise: float = 0.05
    score_scale: float = 20.0
    viq_noise: float = 3.0
    normalize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 1 or self.n < self.clusters:
            raise ValidationError(f"need n >= clusters >= 1, got n={self.n}, clusters={self.clusters}")
        if self.d < 2:
            raise ValidationError(f"d must be >= 2, got {self.d}")
        if self.noise < 0 or self.within_std < 0 or self.viq_noise < 0:
            raise ValidationError("noise, within_std and viq_noise must be nonnegative")
        if len(self.centers) != self.clusters:
            raise ValidationError(
                f"{len(self.centers)} cluster centers given for {self.clusters} clusters"
            )
        if not 0 <= self.outliers <= self.n:
            raise ValidationError(f"outliers must lie in [0, n], got {self.outliers}")
        if not self.score_scale > 0:
            raise ValidationError(f"score_scale must be positive, got {self.score_scale}")


def _coerce(value, default):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        parts = [p for p in value.replace(",", " ").split() if p]
        cast = type(default[0]) if default else float
        return tuple(cast(p) for p in parts)
    if default is None:
        return int(value)
    return value.strip()


def read_kv_file(path):
    """Parse a flat ``key=value`` file; blank lines and ``#`` comments are skipped.

    Keys may use dashes or underscores. Returns a dict of raw strings.
    """
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def from_kv(cls, values):
    """Build dataclass ``cls`` from raw strings, using field defaults for typing."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in fields:
            raise ValidationError(f"unknown key {key!r} for {cls.__name__}")
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        try:
            kwargs[key] = _coerce(raw, default)
        except ValueError as exc:
            raise ValidationError(f"bad value for {key}: {exc}") from exc
    return cls(**kwargs)
