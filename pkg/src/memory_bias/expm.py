"""Matrix exponential by scaling and squaring with a diagonal Pade approximant."""

import math

import numpy as np

# [6/6] Pade with ||A / 2**s||_1 <= 1/2 has truncation error below 1e-15
PADE_ORDER = 6
THETA = 0.5


def _pade_coefficients(q):
    return [
        math.factorial(2 * q - k) * math.factorial(q)
        / (math.factorial(2 * q) * math.factorial(k) * math.factorial(q - k))
        for k in range(q + 1)
    ]


_COEFFS = _pade_coefficients(PADE_ORDER)


def expm(a):
    """Return ``exp(a)`` for a square matrix ``a``."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    norm = np.max(np.sum(np.abs(a), axis=0)) if n else 0.0
    if not np.isfinite(norm):
        raise ValueError("expm input has non-finite entries")
    s = 0
    if norm > THETA:
        s = int(math.ceil(math.log2(norm / THETA)))
    a = a / (2.0**s)

    eye = np.eye(n)
    even = _COEFFS[0] * eye
    odd = np.zeros((n, n))
    power = eye
    for k in range(1, PADE_ORDER + 1):
        power = power @ a
        if k % 2:
            odd = odd + _COEFFS[k] * power
        else:
            even = even + _COEFFS[k] * power
    # N(a) = even + odd, D(a) = N(-a) = even - odd
    result = np.linalg.solve(even - odd, even + odd)
    for _ in range(s):
        result = result @ result
    return result
