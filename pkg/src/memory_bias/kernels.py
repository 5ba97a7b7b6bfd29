"""Memory kernels and the linear functionals they induce.

A memory kernel ``rho`` on ``[0, T]`` defines the causal, time-homogeneous
linear map

    y_t = int_0^t rho(t - s) x_s ds

which is discretized here with a left-endpoint Riemann sum on a grid of step
``dt``:

    y_k = sum_{j=0..k} rho((k - j) dt) * x_j * dt
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ShapeError

# relative slack when checking t <= T on a floating-point grid
_GRID_RTOL = 1e-9


def grid_size(horizon: float, dt: float) -> int:
    """Number of grid steps covering ``[0, horizon]``, i.e. ``ceil(T / dt)``.

    Ratios within rounding error of an integer are snapped to it, so that
    ``grid_size(6.4, 0.1) == 64``.
    """
    ratio = horizon / dt
    nearest = round(ratio)
    if abs(ratio - nearest) <= _GRID_RTOL * max(1.0, abs(ratio)):
        return int(nearest)
    return int(math.ceil(ratio))


@dataclass(frozen=True)
class MemoryKernel:
    """Base class: a non-negative memory function sampled on ``[0, T]``."""

    horizon: float
    dt: float

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise DomainError(f"horizon must be a positive finite time, got {self.horizon}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be a positive finite time step, got {self.dt}")

    kind = "abstract"

    def _values(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t):
        return eval_kernel(self, t)

    def samples(self, n: int, dt: float | None = None) -> np.ndarray:
        """Kernel values at ``k * dt`` for ``k = 0..n-1``."""
        dt = self.dt if dt is None else dt
        t = np.arange(n, dtype=np.float64) * dt
        return _checked(self, t)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialKernel(MemoryKernel):
    """``rho(t) = alpha ** t``, the continuous exponential moving average."""

    alpha: float = 0.5
    kind = "exponential"

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    def _values(self, t):
        return np.power(self.alpha, t)

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}


@dataclass(frozen=True)
class PolynomialKernel(MemoryKernel):
    """``rho(t) = 1 / (t + offset) ** power``.

    The offset removes the singularity of ``1 / t**power`` at ``t = 0`` while
    keeping the polynomial tail. It defaults to ``dt``.
    """

    power: float = 1.1
    offset: float | None = None
    kind = "poly"

    def __post_init__(self):
        super().__post_init__()
        if not (self.power > 0 and math.isfinite(self.power)):
            raise DomainError(f"power must be positive, got {self.power}")
        if self.offset is None:
            object.__setattr__(self, "offset", self.dt)
        if not self.offset > 0:
            raise DomainError(f"offset must be positive, got {self.offset}")

    def _values(self, t):
        return 1.0 / np.power(t + self.offset, self.power)

    def to_dict(self):
        return {"kind": self.kind, "power": self.power, "offset": self.offset}


@dataclass(frozen=True)
class TabulatedKernel(MemoryKernel):
    """Kernel given by samples at ``k * dt``, ``k = 0..ceil(T/dt)``.

    Lookup snaps to the nearest grid point, so sampling on the native grid
    returns the stored values unchanged.
    """

    values: np.ndarray = field(default_factory=lambda: np.zeros(1))
    kind = "tabulated"

    def __post_init__(self):
        super().__post_init__()
        values = np.array(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        expected = grid_size(self.horizon, self.dt) + 1
        if values.ndim != 1 or values.shape[0] != expected:
            raise ShapeError(
                f"tabulated kernel needs {expected} samples for T={self.horizon}, "
                f"dt={self.dt}; got shape {values.shape}"
            )

    def _values(self, t):
        idx = np.rint(t / self.dt).astype(np.int64)
        return self.values[np.clip(idx, 0, self.values.shape[0] - 1)]

    def to_dict(self):
        return {"kind": self.kind, "values": self.values.tolist()}

    def __eq__(self, other):
        return (
            isinstance(other, TabulatedKernel)
            and self.horizon == other.horizon
            and self.dt == other.dt
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _checked(kernel: MemoryKernel, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    slack = _GRID_RTOL * kernel.horizon
    if np.any(t < -slack) or np.any(t > kernel.horizon + slack) or np.any(np.isnan(t)):
        raise DomainError(f"kernel evaluated outside [0, {kernel.horizon}]")
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = kernel._values(np.clip(t, 0.0, kernel.horizon))
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite value from {kernel.kind} kernel")
    return out


def eval_kernel(kernel: MemoryKernel, t):
    """Evaluate ``rho(t)`` for scalar or array ``t`` in ``[0, T]``."""
    out = _checked(kernel, t)
    return float(out) if out.ndim == 0 else out


def kernel_from_dict(spec: dict, horizon: float, dt: float) -> MemoryKernel:
    """Build a kernel from its config-table form (see ``MemoryKernel.to_dict``)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "exponential":
        return ExponentialKernel(horizon, dt, **spec)
    if kind == "poly":
        return PolynomialKernel(horizon, dt, **spec)
    if kind == "tabulated":
        return TabulatedKernel(horizon, dt, values=spec.pop("values"), **spec)
    raise DomainError(f"unknown kernel kind {kind!r}")


def causal_convolve(rho: np.ndarray, inputs: np.ndarray, dt: float) -> np.ndarray:
    """``y_k = sum_{j<=k} rho[k-j] * x_j * dt`` along the last axis.

    Terms are accumulated lag by lag in a fixed order and independently of the
    leading (batch) axes, so each sample's output is bitwise reproducible no
    matter how samples are batched.
    """
    x = np.asarray(inputs, dtype=np.float64)
    n = x.shape[-1]
    if rho.shape[0] < n:
        raise ShapeError(f"kernel has {rho.shape[0]} samples, inputs need {n}")
    y = np.zeros_like(x)
    with np.errstate(over="ignore", invalid="ignore"):
        for lag in range(n):
            y[..., lag:] += (rho[lag] * x[..., : n - lag]) * dt
    if not np.all(np.isfinite(y)):
        raise NumericalError("overflow in linear functional evaluation")
    return y


def apply_linear_functional(kernel: MemoryKernel, inputs, dt: float) -> np.ndarray:
    """Ground-truth outputs of the functional with memory ``kernel``.

    ``inputs`` has shape ``(L,)`` or ``(batch, L)``; the output has the same
    shape.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    n = x.shape[-1] if x.ndim else 0
    if n == 0:
        return np.zeros_like(x)
    if not np.all(np.isfinite(x)):
        raise DomainError("inputs must be finite")
    if (n - 1) * dt > kernel.horizon * (1 + _GRID_RTOL):
        raise DomainError(f"sequence of length {n} with dt={dt} exceeds horizon {kernel.horizon}")
    return causal_convolve(kernel.samples(n, dt), x, dt)


def kernel_l1_distance(a, b, dt: float) -> float:
    """``sum_k |a_k - b_k| * dt``, the discretized L1 memory difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"kernel sample shapes differ: {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(a - b)) * dt)
