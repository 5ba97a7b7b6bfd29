"""Monte-Carlo check of the memory bias of weighted absolute errors.

Perturbing the target kernel at a single lag ``k`` by ``delta`` makes the
residual at position ``j >= k`` equal ``delta * x_{j-k} * dt``. Its expected
weighted absolute error is therefore ``delta * dt * E|x| * b_k`` exactly, and
ratios across lags isolate ``b_k / b_k'`` without knowing ``E|x|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .kernels import MemoryKernel, TabulatedKernel, apply_linear_functional, grid_size
from .losses import WeightScheme, analytic_bias, weighted_error

# samples per batch; partial sums are combined in batch order
BATCH = 8192


@dataclass(frozen=True)
class DeltaPerturbation:
    lag_index: int
    magnitude: float

    def apply(self, kernel: MemoryKernel, length: int) -> TabulatedKernel:
        """Tabulated copy of ``kernel`` with ``magnitude`` added at ``lag_index``."""
        if not 0 <= self.lag_index < length:
            raise DomainError(f"lag {self.lag_index} outside [0, {length})")
        n = grid_size(kernel.horizon, kernel.dt) + 1
        values = kernel.samples(n).copy()
        values[self.lag_index] += self.magnitude
        return TabulatedKernel(kernel.horizon, kernel.dt, values=values)


@dataclass(frozen=True)
class RatioRow:
    lag: int
    reference_lag: int
    empirical: float
    analytic: float

    @property
    def ratio_error(self) -> float:
        return abs(self.empirical / self.analytic - 1.0)


@dataclass(frozen=True)
class RatioReport:
    rows: list
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(r.ratio_error <= self.tolerance for r in self.rows)


def empirical_expected_error(
    kernel: MemoryKernel,
    perturbation: DeltaPerturbation,
    scheme: WeightScheme,
    n_samples: int,
    seed: int,
) -> float:
    """Mean weighted absolute error between the target and the perturbed target.

    Inputs are iid Uniform[-1, 1]. The same seed always draws the same inputs,
    so different lags and magnitudes are compared on common random numbers.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    length, dt = scheme.length, scheme.dt
    if not np.isclose(kernel.dt, dt, rtol=1e-12, atol=0.0) or kernel.horizon < (length - 1) * dt:
        raise DomainError(f"kernel grid (dt={kernel.dt}, T={kernel.horizon}) does not match the scheme (dt={dt}, L={length})")
    perturbed = perturbation.apply(kernel, length)
    rng = np.random.default_rng(seed)
    total = 0.0
    done = 0
    while done < n_samples:
        size = min(BATCH, n_samples - done)
        x = rng.uniform(-1.0, 1.0, size=(size, length))
        y = apply_linear_functional(kernel, x, dt)
        y_hat = apply_linear_functional(perturbed, x, dt)
        value, _ = weighted_error(y_hat, y, scheme, "absolute")
        total += value * size
        done += size
    return total / n_samples


def bias_ratio_test(
    kernel: MemoryKernel,
    scheme: WeightScheme,
    lag_pairs,
    n_samples: int = 100_000,
    seed: int = 0,
    tolerance: float = 0.02,
    magnitude: float = 1.0,
) -> RatioReport:
    """Compare empirical and analytic bias ratios ``b(k1) / b(k2)``."""
    bias = analytic_bias(scheme).values
    cache = {}

    def expected(lag):
        if lag not in cache:
            cache[lag] = empirical_expected_error(
                kernel, DeltaPerturbation(lag, magnitude), scheme, n_samples, seed
            )
        return cache[lag]

    rows = []
    for k1, k2 in lag_pairs:
        if k1 == k2:
            raise ConfigError(f"lag pair ({k1}, {k2}) must be distinct")
        if bias[k2] == 0:
            raise ConfigError(f"analytic bias is zero at reference lag {k2}")
        rows.append(RatioRow(k1, k2, float(expected(k1) / expected(k2)), float(bias[k1] / bias[k2])))
    return RatioReport(rows, tolerance)
