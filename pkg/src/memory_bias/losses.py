"""Temporally positive-weighted errors and their memory bias.

A weighted error puts weight ``w_k`` on output position ``k``. For a linear
target the expected absolute error weighs the kernel discrepancy at lag
``s_k = k * dt`` by the tail sum

    b_k = sum_{j >= k} w_j * dt

so any strictly positive weighting favours short lags. The polynomial family
``w(t) = t**p`` (evaluated at ``t_k = (k + 1) * dt``) flattens ``b`` as ``p``
grows; the ``last`` scheme (``p = inf``) makes it constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, ShapeError

FAMILIES = ("poly", "last")
NORMALIZATIONS = ("bias_integral", "weight_sum", "none")
ERROR_KINDS = ("absolute", "squared")


@dataclass(frozen=True)
class WeightScheme:
    family: str
    p: float
    length: int
    dt: float
    normalization: str
    weights: np.ndarray

    @property
    def horizon(self) -> float:
        return self.length * self.dt

    @property
    def label(self) -> str:
        return "inf" if self.family == "last" else format_power(self.p)

    def to_dict(self) -> dict:
        return {"family": self.family, "p": self.p, "normalization": self.normalization}


@dataclass(frozen=True)
class BiasCurve:
    """Bias ``b(s_k)`` at ``s_k = k * dt`` for ``k = 0..L-1``; ``b(T) = 0``."""

    values: np.ndarray
    dt: float

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.dt

    def integral(self) -> float:
        """Trapezoid integral over ``[0, T]`` including the end point ``b(T) = 0``."""
        return trapezoid_with_zero_end(self.values, self.dt)


def format_power(p: float) -> str:
    if math.isinf(p):
        return "inf"
    return repr(float(p))


def trapezoid_with_zero_end(values: np.ndarray, dt: float) -> float:
    return float(dt * (np.sum(values) - 0.5 * values[0]))


def _tail_sums(weights: np.ndarray, dt: float) -> np.ndarray:
    # b_k = b_{k+1} + w_k dt, accumulated from the end
    return np.cumsum((weights * dt)[::-1])[::-1]


def make_weights(
    family: str,
    length: int,
    dt: float,
    p: float = 0.0,
    normalization: str = "bias_integral",
) -> WeightScheme:
    """Materialize a normalized weight vector.

    ``normalization="bias_integral"`` scales the weights so that the induced
    bias curve integrates to one over ``[0, T]``; ``"weight_sum"`` makes the
    weights sum to one (the convention for the cross-entropy experiments);
    ``"none"`` keeps the raw ``t**p`` values.
    """
    if family not in FAMILIES:
        raise DomainError(f"unknown weight family {family!r}")
    if normalization not in NORMALIZATIONS:
        raise DomainError(f"unknown normalization {normalization!r}")
    if length < 1:
        raise DomainError(f"length must be >= 1, got {length}")
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")

    if family == "last":
        p = math.inf
        raw = np.zeros(length)
        raw[-1] = 1.0
    else:
        if math.isnan(p) or p < -1 or math.isinf(p):
            raise DomainError(f"polynomial power must be finite and >= -1, got {p}")
        t = np.arange(1, length + 1, dtype=np.float64) * dt
        with np.errstate(over="ignore"):
            raw = np.power(t, float(p))
    if not np.all(np.isfinite(raw)) or not np.all(raw >= 0):
        raise NumericalError(f"non-finite weights for p={p}, L={length}, dt={dt}")

    if normalization == "bias_integral":
        total = trapezoid_with_zero_end(_tail_sums(raw, dt), dt)
    elif normalization == "weight_sum":
        total = float(np.sum(raw))
    else:
        total = 1.0
    weights = raw / total
    if not np.all(np.isfinite(weights)):
        raise NumericalError(f"weights overflow after normalization for p={p}")
    weights.setflags(write=False)
    return WeightScheme(family, float(p), length, dt, normalization, weights)


def power_scheme(p: float, length: int, dt: float, normalization: str = "bias_integral") -> WeightScheme:
    """``w(t) = t**p``; ``p = inf`` selects the last-term-only scheme."""
    if math.isinf(p) and p > 0:
        return make_weights("last", length, dt, normalization=normalization)
    return make_weights("poly", length, dt, p=p, normalization=normalization)


def analytic_bias(scheme: WeightScheme) -> BiasCurve:
    """Memory bias induced by ``scheme``: discrete tail sums of the weights."""
    return BiasCurve(_tail_sums(np.asarray(scheme.weights), scheme.dt), scheme.dt)


def _check_pair(pred, target, scheme):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.ndim == 0 or pred.shape[-1] != scheme.length:
        raise ShapeError(f"sequence length {pred.shape[-1:]} does not match scheme length {scheme.length}")
    return pred, target


def weighted_error(pred, target, scheme: WeightScheme, kind: str = "absolute"):
    """Weighted absolute or squared error and its gradient w.r.t. ``pred``.

    ``value = mean over leading axes of sum_k w_k * loss_k * dt``. The
    absolute-loss subgradient at zero residual is 0.
    """
    if kind not in ERROR_KINDS:
        raise DomainError(f"unknown error kind {kind!r}")
    pred, target = _check_pair(pred, target, scheme)
    n_seq = pred.size // scheme.length
    resid = pred - target
    scale = np.asarray(scheme.weights) * scheme.dt
    if kind == "absolute":
        per_pos = np.abs(resid)
        grad = np.sign(resid)
    else:
        per_pos = resid * resid
        grad = 2.0 * resid
    value = float(np.sum(per_pos * scale) / n_seq)
    grad = grad * (scale / n_seq)
    return value, grad


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def weighted_cross_entropy(logits, labels, scheme: WeightScheme):
    """``sum_k w_k * CE(logits_k, label_k)``, averaged over leading axes.

    ``logits`` has shape ``(..., L, K)`` and ``labels`` ``(..., L)``.
    Returns ``(value, grad_wrt_logits)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim < 2 or logits.shape[:-1] != labels.shape:
        raise ShapeError(f"logits {logits.shape} do not match labels {labels.shape}")
    n_classes = logits.shape[-1]
    if n_classes < 2:
        raise DomainError("cross entropy needs at least two classes")
    if labels.shape[-1] != scheme.length:
        raise ShapeError(f"sequence length {labels.shape[-1]} does not match scheme length {scheme.length}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise DomainError("labels must be integer class indices")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise DomainError(f"labels must lie in [0, {n_classes})")

    n_seq = labels.size // scheme.length
    logp = log_softmax(logits)
    nll = -np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    w = np.asarray(scheme.weights)
    value = float(np.sum(nll * w) / n_seq)
    grad = np.exp(logp)
    np.put_along_axis(grad, labels[..., None], np.take_along_axis(grad, labels[..., None], axis=-1) - 1.0, axis=-1)
    grad *= (w / n_seq)[:, None]
    return value, grad
