"""Step-response memory of arbitrary sequence models.

The discrete generalized memory at step ``k`` is

    rho_hat(k) = max_{x in probe_set} |H_k(x * 1) - H_{k-1}(x * 1)|

with ``H_{-1} = 0``: the per-step increment of the output on a constant
input switched on at ``t = 0``. It is in output units (kernel times ``dt``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, ShapeError
from .kernels import MemoryKernel, apply_linear_functional, kernel_l1_distance

DEFAULT_PROBES = (1.0, -1.0)
DENSE_PROBES = (1.0, -1.0, 0.5, -0.5, 0.25, -0.25)


class TargetFunctional:
    """Ground-truth linear functional exposed with the model ``predict`` API."""

    n_in = 1
    n_out = 1

    def __init__(self, kernel: MemoryKernel, dt: float):
        self.kernel = kernel
        self.dt = dt

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            return apply_linear_functional(self.kernel, x[..., 0], self.dt)[..., None]
        return apply_linear_functional(self.kernel, x, self.dt)


def probe_memory(model, length: int, probe_set=DEFAULT_PROBES) -> np.ndarray:
    """Generalized memory of ``model`` on ``length`` steps, in output units."""
    probes = np.asarray(probe_set, dtype=np.float64)
    if probes.size == 0:
        raise DomainError("probe_set must not be empty")
    if np.any(np.abs(probes) > 1):
        raise DomainError("probe amplitudes must lie in [-1, 1]")
    steps = probes[:, None] * np.ones((probes.size, length))
    try:
        out = np.asarray(model.predict(steps), dtype=np.float64)
    except NumericalError as exc:
        raise NumericalError(f"model diverged on the step input: {exc}") from exc
    if out.shape != steps.shape:
        raise ShapeError(f"model returned {out.shape} for step inputs {steps.shape}")
    if not np.all(np.isfinite(out)):
        raise NumericalError("model diverged on the step input")
    increments = np.abs(np.diff(out, axis=1, prepend=0.0))
    return np.max(increments, axis=0)


@dataclass(frozen=True)
class MemoryReport:
    memory_difference: float
    s: np.ndarray
    rho_target: np.ndarray
    rho_model: np.ndarray

    @property
    def abs_diff(self) -> np.ndarray:
        return np.abs(self.rho_target - self.rho_model)

    def rows(self):
        for row in zip(self.s, self.rho_target, self.rho_model, self.abs_diff):
            yield tuple(float(v) for v in row)


def memory_report(target_kernel: MemoryKernel, model, length: int, dt: float,
                  probe_set=DEFAULT_PROBES) -> MemoryReport:
    """Probe ``model`` and compare with ``target_kernel`` on ``k * dt``, ``k < length``."""
    model_dt = getattr(model, "dt", dt)
    if not np.isclose(model_dt, dt, rtol=1e-12, atol=0.0):
        raise ShapeError(f"model grid dt={model_dt} differs from report grid dt={dt}")
    rho_target = target_kernel.samples(length, dt)
    rho_model = probe_memory(model, length, probe_set) / dt
    return MemoryReport(
        kernel_l1_distance(rho_target, rho_model, dt),
        np.arange(length) * dt,
        rho_target,
        rho_model,
    )
