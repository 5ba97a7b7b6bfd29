"""Datasets: the synthetic linear-functional task and the copying problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .kernels import MemoryKernel, apply_linear_functional

BLANK = 0


@dataclass(frozen=True)
class Dataset:
    """Batched ``(inputs, targets)`` pairs; first axis indexes samples."""

    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def length(self):
        return self.inputs.shape[1]

    def take(self, idx):
        return Dataset(self.inputs[idx], self.targets[idx])

    def batches(self, size, order=None):
        n = len(self)
        order = np.arange(n) if order is None else order
        for start in range(0, n, size):
            yield self.take(order[start:start + size])


def gen_synthetic(kernel: MemoryKernel, n: int, length: int, dt: float, seed: int) -> Dataset:
    """Inputs iid Uniform[-1, 1]; targets from the ground-truth functional."""
    if n < 1:
        raise DomainError(f"dataset size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n, length))
    return Dataset(x, apply_linear_functional(kernel, x, dt))


def gen_copying(n_symbols: int, payload_len: int, delay: int, n: int, seed: int) -> Dataset:
    """Copying problem with integer symbols.

    Input: ``payload_len`` symbols from ``1..K-2``, ``delay`` blanks, the
    trigger ``K-1``, then ``payload_len - 1`` blanks. Target: blanks except
    the final ``payload_len`` positions, which repeat the payload.
    """
    if n_symbols < 3:
        raise DomainError("copying needs K >= 3 (blank, trigger and one payload symbol)")
    if payload_len < 1 or delay < 0 or n < 1:
        raise DomainError("need payload_len >= 1, delay >= 0 and n >= 1")
    rng = np.random.default_rng(seed)
    m = payload_len
    length = 2 * m + delay
    payload = rng.integers(1, n_symbols - 1, size=(n, m))
    x = np.full((n, length), BLANK, dtype=np.int64)
    x[:, :m] = payload
    x[:, m + delay] = n_symbols - 1
    y = np.full((n, length), BLANK, dtype=np.int64)
    y[:, -m:] = payload
    return Dataset(x, y)


def one_hot(symbols: np.ndarray, n_symbols: int) -> np.ndarray:
    return np.eye(n_symbols)[symbols]


def recall_accuracy(logits: np.ndarray, labels: np.ndarray, payload_len: int) -> float:
    """Fraction of correct argmax predictions on the final ``payload_len`` positions."""
    pred = np.argmax(logits[:, -payload_len:], axis=-1)
    return float(np.mean(pred == labels[:, -payload_len:]))
