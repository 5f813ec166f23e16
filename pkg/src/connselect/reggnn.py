"""RegGNN: a two-layer graph convolutional regressor written against numpy.

Node features are one-hot (the first layer input is the identity), so the
first convolution reduces to ``A @ W0``::

    H1   = ReLU(A @ W0)              d x hidden, inverted dropout in training
    h2   = ReLU(A @ H1 @ W1)         d x 1
    pred = fc . h2 + bias

``A`` is the symmetrically normalized adjacency of the connectome with self
loops added. Training minimizes squared error with Adam, one sample per step.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .errors import NumericalError, ValidationError
from .spd import DEFAULT_MU, clamp_negative, regularize

log = logging.getLogger(__name__)

WEIGHT_NAMES = ("W0", "W1", "fc")
PARAM_NAMES = WEIGHT_NAMES + ("bias",)
CHECKPOINT_FORMAT = "connselect-reggnn"


def normalize_adjacency(P):
    """``D^-1/2 (P + I) D^-1/2`` with ``D`` the row sums of ``P + I``."""
    P = np.asarray(P, dtype=float)
    Pt = P + np.eye(P.shape[0])
    deg = Pt.sum(axis=1)
    if np.any(deg <= 0):
        raise ValidationError("adjacency has a nonpositive degree after adding self loops")
    s = 1.0 / np.sqrt(deg)
    A = Pt * np.outer(s, s)
    return 0.5 * (A + A.T)


def prepare_adjacency(C, mu=DEFAULT_MU, clamp="entries"):
    """Connectome -> normalized adjacency fed to the network."""
    return normalize_adjacency(regularize(clamp_negative(C, clamp), mu))


@dataclass
class RegGnnModel:
    W0: np.ndarray
    W1: np.ndarray
    fc: np.ndarray
    bias: float = 0.0
    dropout: float = 0.1
    mu: float = DEFAULT_MU
    clamp: str = "entries"
    # affine map from network output to score units; identity unless trained
    # with standardized targets
    target_shift: float = 0.0
    target_scale: float = 1.0

    @property
    def d(self):
        return self.W0.shape[0]

    @property
    def hidden(self):
        return self.W0.shape[1]

    def params(self):
        return {"W0": self.W0, "W1": self.W1, "fc": self.fc, "bias": np.float64(self.bias)}

    def with_params(self, params):
        return RegGnnModel(
            params["W0"], params["W1"], params["fc"], float(params["bias"]),
            self.dropout, self.mu, self.clamp, self.target_shift, self.target_scale,
        )

    def check(self):
        d, h = self.W0.shape
        if self.W1.shape != (h,) or self.fc.shape != (d,):
            raise ValidationError(
                f"inconsistent shapes W0={self.W0.shape} W1={self.W1.shape} fc={self.fc.shape}"
            )
        for name, p in self.params().items():
            if not np.all(np.isfinite(p)):
                raise NumericalError(f"parameter {name} is not finite")


def init_model(d, hidden=64, rng=None, dropout=0.1, mu=DEFAULT_MU, clamp="entries"):
    """Uniform Glorot initialization; bias starts at 0."""
    rng = np.random.default_rng(rng)

    def glorot(fan_in, fan_out, shape):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)

    return RegGnnModel(
        W0=glorot(d, hidden, (d, hidden)),
        W1=glorot(hidden, 1, (hidden,)),
        fc=glorot(d, 1, (d,)),
        bias=0.0,
        dropout=dropout,
        mu=mu,
        clamp=clamp,
    )


def dropout_mask(rng, shape, rate):
    """Inverted-dropout mask: kept units are scaled by ``1 / (1 - rate)``."""
    if rate == 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward(model, A, mask):
    Z1 = A @ model.W0
    H1 = np.maximum(Z1, 0.0)
    if mask is not None:
        H1 = H1 * mask
    AH1 = A @ H1
    z2 = AH1 @ model.W1
    h2 = np.maximum(z2, 0.0)
    pred = float(model.fc @ h2 + model.bias)
    return pred, (Z1, H1, AH1, z2, h2)


def _check_inputs(model, A, mask):
    A = np.asarray(A, dtype=float)
    if A.shape != (model.d, model.d):
        raise ValidationError(f"adjacency shape {A.shape} does not match model d={model.d}")
    if mask is not None and np.shape(mask) != model.W0.shape:
        raise ValidationError(f"dropout mask shape {np.shape(mask)} != {model.W0.shape}")
    return A


def forward(model, A, mask=None):
    """Predicted score for normalized adjacency ``A``.

    ``mask`` is a dropout mask on the first layer's activations (training
    only); ``None`` runs in inference mode.
    """
    return _forward(model, _check_inputs(model, A, mask), mask)[0]


def loss_and_grads(model, A, y, mask=None, weight_decay=0.0):
    """Squared error ``(pred - y)^2`` and its gradients.

    Weight decay adds ``2 * weight_decay * theta`` to the gradient of every
    weight; the bias is not decayed and the returned loss excludes the penalty.
    """
    A = _check_inputs(model, A, mask)
    pred, (Z1, H1, AH1, z2, h2) = _forward(model, A, mask)
    g = 2.0 * (pred - y)
    grads = {"fc": g * h2, "bias": np.float64(g)}
    dz2 = g * model.fc * (z2 > 0)
    grads["W1"] = AH1.T @ dz2
    dH1 = A.T @ np.outer(dz2, model.W1)
    if mask is not None:
        dH1 = dH1 * mask
    grads["W0"] = A.T @ (dH1 * (Z1 > 0))
    if weight_decay:
        for name in WEIGHT_NAMES:
            grads[name] = grads[name] + 2.0 * weight_decay * getattr(model, name)
    return (pred - y) ** 2, grads


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params):
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update. Returns new params; ``state`` is updated."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = {}
    for k, p in params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        out[k] = p - lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps)
    return out


@dataclass
class TrainHistory:
    epoch_loss: list = field(default_factory=list)


def _orient_second_layer(model, adj):
    """Negate ``W1`` if the second layer starts mostly below zero.

    The node values of the second layer are nearly equal across nodes, so a
    negative start tends to switch off every ReLU and leave the bias as the
    only trainable path. ``W1`` is drawn from a symmetric law, so the flip
    keeps the initialization distribution.
    """
    z2 = np.concatenate([_forward(model, A, None)[1][3] for A in adj])
    if z2.mean() < 0:
        model.W1 = -model.W1
    return model


def train(samples, cfg=TrainConfig(), history=None):
    """Fit a fresh model on ``(connectome, score)`` pairs.

    Each epoch visits the samples in a seeded random order with batch size 1
    and a fresh dropout mask per step. Identical inputs and ``cfg.seed`` give
    bit-identical weights. With ``cfg.standardize_targets`` the network is fit
    to z-scored targets and the model maps outputs back to score units.
    """
    if not samples:
        raise ValidationError("cannot train on zero samples")
    adj = [prepare_adjacency(C, cfg.mu, cfg.clamp) for C, _ in samples]
    ys = np.array([float(y) for _, y in samples])
    shift, scale = 0.0, 1.0
    if cfg.standardize_targets:
        shift = float(ys.mean())
        scale = float(ys.std()) or 1.0
    ys = (ys - shift) / scale
    d = adj[0].shape[0]
    rng = np.random.default_rng(cfg.seed)
    model = init_model(d, cfg.hidden, rng, cfg.dropout, cfg.mu, cfg.clamp)
    model = _orient_second_layer(model, adj)
    params = model.params()
    state = AdamState.zeros_like(params)
    for epoch in range(cfg.epochs):
        total = 0.0
        for i in rng.permutation(len(samples)):
            mask = dropout_mask(rng, model.W0.shape, cfg.dropout)
            loss, grads = loss_and_grads(model, adj[i], ys[i], mask, cfg.weight_decay)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch}, sample {i} (loss={loss})"
                )
            params = adam_step(params, grads, state, cfg.lr)
            model = model.with_params(params)
            total += loss
        if history is not None:
            history.epoch_loss.append(total / len(samples))
    model.target_shift, model.target_scale = shift, scale
    log.debug("trained RegGNN on %d samples, d=%d", len(samples), d)
    return model


def predict(model, C):
    """Score prediction for a raw connectome (inference mode, no dropout)."""
    out = forward(model, prepare_adjacency(C, model.mu, model.clamp))
    return model.target_shift + model.target_scale * out


def extract_roi_importance(model, top_m=None):
    """ROIs ranked by ``|fc weight|`` (descending, ties by index)."""
    return rank_weights(model.fc, top_m)


def rank_weights(w, top_m=None):
    w = np.asarray(w, dtype=float)
    top_m = len(w) if top_m is None else top_m
    if not 1 <= top_m <= len(w):
        raise ValidationError(f"top_m must lie in [1, {len(w)}], got {top_m}")
    order = np.lexsort((np.arange(len(w)), -np.abs(w)))[:top_m]
    return [(int(i), float(w[i])) for i in order]


def model_to_dict(model):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "hyper": {
            "d": model.d,
            "hidden": model.hidden,
            "dropout": model.dropout,
            "mu": model.mu,
            "clamp": model.clamp,
            "target_shift": model.target_shift,
            "target_scale": model.target_scale,
        },
        "W0": model.W0.tolist(),
        "W1": model.W1.tolist(),
        "fc": model.fc.tolist(),
        "bias": float(model.bias),
    }


def model_from_dict(doc):
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError("not a RegGNN checkpoint")
    try:
        return _model_from_doc(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed checkpoint: {exc!r}") from exc


def _model_from_doc(doc):
    hyper = doc["hyper"]
    model = RegGnnModel(
        W0=np.array(doc["W0"], dtype=float).reshape(hyper["d"], hyper["hidden"]),
        W1=np.array(doc["W1"], dtype=float),
        fc=np.array(doc["fc"], dtype=float),
        bias=float(doc["bias"]),
        dropout=float(hyper["dropout"]),
        mu=float(hyper["mu"]),
        clamp=hyper["clamp"],
        target_shift=float(hyper.get("target_shift", 0.0)),
        target_scale=float(hyper.get("target_scale", 1.0)),
    )
    model.check()
    return model


def save_model(model, path):
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: cannot read checkpoint ({exc})") from exc
    return model_from_dict(doc)
