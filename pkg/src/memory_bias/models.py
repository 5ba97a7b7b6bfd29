"""Sequence models with hand-written reverse-mode gradients.

Arrays are laid out ``(batch, time, channels)``. Every model exposes

- ``params``: dict of named float64 arrays (updated in place by optimizers)
- ``forward(x) -> (y, cache)`` and ``backward(cache, dy) -> GradBundle``
- ``predict(x)`` which also accepts 1-D ``(L,)`` or 2-D ``(B, L)`` inputs
  for single-channel models
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError, UnsupportedOperation
from .expm import expm

ACTIVATIONS = ("identity", "tanh")


@dataclass
class GradBundle:
    """Parameter gradients (same names and shapes as ``model.params``)."""

    params: dict
    inputs: np.ndarray | None = None
    loss: float = math.nan

    def norm(self) -> float:
        return global_norm(self.params)


def global_norm(grads: dict) -> float:
    total = 0.0
    for name in sorted(grads):
        g = grads[name]
        total += float(np.sum(g * g))
    return math.sqrt(total)


def _as_batch(x, n_in):
    """Lift 1-D/2-D single-channel inputs to ``(B, L, 1)``; return the squeeze mode."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x, 0
    if n_in != 1:
        raise ShapeError(f"model expects {n_in} input channels; pass (B, L, {n_in}) arrays")
    if x.ndim == 1:
        return x[None, :, None], 1
    if x.ndim == 2:
        return x[:, :, None], 2
    raise ShapeError(f"unsupported input shape {x.shape}")


def _unbatch(y, mode):
    if mode == 1:
        return y[0, :, 0]
    if mode == 2:
        return y[:, :, 0]
    return y


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


class SequenceModel:
    kind = "abstract"

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dy) -> GradBundle:
        raise NotImplementedError

    def predict(self, x):
        xb, mode = _as_batch(x, self.n_in)
        y, _ = self.forward(xb)
        if self.n_out != 1 and mode:
            raise ShapeError("multi-output model: pass (B, L, n_in) inputs")
        return _unbatch(y, mode)

    def spec(self) -> dict:
        raise NotImplementedError

    def copy(self):
        return type(self).from_spec(self.spec(), {k: v.copy() for k, v in self.params.items()})


class RNN(SequenceModel):
    """Euler-discretized recurrent network.

    ``h_0 = 0``, ``h_{k+1} = h_k + dt * act(W h_k + U x_k)`` and the output at
    step ``k`` reads the updated state, ``y_k = C h_{k+1}``, so ``y_k`` depends
    on ``x_0..x_k``. For the identity activation the impulse response is
    ``dt * C (I + dt W)^k U``.
    """

    kind = "rnn"

    def __init__(self, W, U, C, activation="identity", dt=0.1):
        _check_activation(activation)
        W = np.array(W, dtype=np.float64)
        U = np.array(U, dtype=np.float64)
        C = np.array(C, dtype=np.float64)
        if U.ndim == 1:
            U = U[:, None]
        if C.ndim == 1:
            C = C[None, :]
        d = W.shape[0]
        if W.shape != (d, d) or U.shape[0] != d or C.shape[1] != d or d < 1:
            raise ShapeError(f"inconsistent RNN shapes W{W.shape} U{U.shape} C{C.shape}")
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.params = {"W": W, "U": U, "C": C}
        self.activation = activation
        self.dt = float(dt)

    @classmethod
    def init(cls, hidden, rng, n_in=1, n_out=1, activation="identity", dt=0.1, shift=1.0):
        """W ~ N(0, 1/d) - shift * I; U, C ~ N(0, 1/d)."""
        std = 1.0 / math.sqrt(hidden)
        W = rng.normal(0.0, std, (hidden, hidden)) - shift * np.eye(hidden)
        U = rng.normal(0.0, std, (hidden, n_in))
        C = rng.normal(0.0, std, (n_out, hidden))
        return cls(W, U, C, activation, dt)

    @property
    def hidden(self):
        return self.params["W"].shape[0]

    @property
    def n_in(self):
        return self.params["U"].shape[1]

    @property
    def n_out(self):
        return self.params["C"].shape[0]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeError(f"expected inputs (B, L, {self.n_in}), got {x.shape}")
        W, U, C = self.params["W"], self.params["U"], self.params["C"]
        batch, length, _ = x.shape
        states = np.zeros((batch, length + 1, self.hidden))
        acts = np.empty((batch, length, self.hidden))
        h = states[:, 0]
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(length):
                z = h @ W.T + x[:, k] @ U.T
                a = np.tanh(z) if self.activation == "tanh" else z
                h = h + self.dt * a
                acts[:, k] = a
                states[:, k + 1] = h
            y = states[:, 1:] @ C.T
        if not np.all(np.isfinite(y)):
            raise NumericalError("RNN state diverged")
        return y, (x, states, acts)

    def backward(self, cache, dy):
        x, states, acts = cache
        W, U, C = self.params["W"], self.params["U"], self.params["C"]
        dy = np.asarray(dy, dtype=np.float64)
        batch, length, _ = x.shape
        if dy.shape != (batch, length, self.n_out):
            raise ShapeError(f"upstream gradient shape {dy.shape} != outputs {(batch, length, self.n_out)}")
        dC = np.tensordot(dy, states[:, 1:], axes=([0, 1], [0, 1]))
        dh_out = dy @ C
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        dx = np.empty_like(x)
        g = np.zeros((batch, self.hidden))
        for k in range(length - 1, -1, -1):
            g = g + dh_out[:, k]
            dz = self.dt * g
            if self.activation == "tanh":
                dz = dz * (1.0 - acts[:, k] ** 2)
            dW += dz.T @ states[:, k]
            dU += dz.T @ x[:, k]
            dx[:, k] = dz @ U
            g = g + dz @ W
        return GradBundle({"W": dW, "U": dU, "C": dC}, dx)

    def closed_form_memory(self, n, dt=None):
        """``C (I + dt W)^k U`` for ``k = 0..n-1``, shape ``(n,)`` for 1-in/1-out models."""
        self._require_linear()
        dt = self.dt if dt is None else dt
        A = np.eye(self.hidden) + dt * self.params["W"]
        out = np.empty((n, self.n_out, self.n_in))
        v = self.params["U"]
        for k in range(n):
            out[k] = self.params["C"] @ v
            v = A @ v
        return self._squeeze_memory(out)

    def continuous_memory(self, s):
        """``C exp(W s) U`` at the times ``s``."""
        self._require_linear()
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        out = np.empty((s.shape[0], self.n_out, self.n_in))
        for i, t in enumerate(s):
            out[i] = self.params["C"] @ expm(self.params["W"] * t) @ self.params["U"]
        return self._squeeze_memory(out)

    def _squeeze_memory(self, out):
        if self.n_in == 1 and self.n_out == 1:
            return out[:, 0, 0]
        return out

    def _require_linear(self):
        if self.activation != "identity":
            raise UnsupportedOperation("closed-form memory exists only for the identity activation")

    def spec(self):
        return {"kind": self.kind, "activation": self.activation, "dt": self.dt}

    @classmethod
    def from_spec(cls, spec, params):
        return cls(params["W"], params["U"], params["C"], spec["activation"], spec["dt"])


def _causal_conv(x, w, dilation):
    # y[:, t] = sum_m w[:, :, m] @ x[:, t - m * dilation]
    batch, length, _ = x.shape
    y = np.zeros((batch, length, w.shape[0]))
    for m in range(w.shape[2]):
        shift = m * dilation
        if shift >= length:
            break
        y[:, shift:] += x[:, : length - shift] @ w[:, :, m].T
    return y


def _causal_conv_backward(x, w, dilation, dy):
    batch, length, _ = x.shape
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for m in range(w.shape[2]):
        shift = m * dilation
        if shift >= length:
            break
        dx[:, : length - shift] += dy[:, shift:] @ w[:, :, m]
        dw[:, :, m] = np.tensordot(dy[:, shift:], x[:, : length - shift], axes=([0, 1], [0, 1]))
    return dx, dw


class TCN(SequenceModel):
    """Stack of causal dilated 1-D convolutions, zero-padded on the left.

    Layer ``i`` has weight ``w{i}`` of shape ``(out, in, width)`` where tap
    ``m`` looks ``m * dilation`` steps into the past, and an optional bias
    ``b{i}``. The activation is applied between layers, never after the last.
    """

    kind = "tcn"

    def __init__(self, weights, dilations=None, activation="identity", biases=None):
        _check_activation(activation)
        weights = [np.array(w, dtype=np.float64) for w in weights]
        if not weights:
            raise ShapeError("a TCN needs at least one layer")
        for w in weights:
            if w.ndim == 1:
                raise ShapeError("layer weights must be (out, in, width); use TCN.single_channel for 1-D taps")
        for prev, nxt in zip(weights, weights[1:]):
            if prev.shape[0] != nxt.shape[1]:
                raise ShapeError(f"layer widths do not chain: {prev.shape} -> {nxt.shape}")
        if dilations is None:
            dilations = [1] * len(weights)
        if len(dilations) != len(weights) or any(d < 1 for d in dilations):
            raise ShapeError("need one dilation >= 1 per layer")
        self.params = {f"w{i}": w for i, w in enumerate(weights)}
        if biases is not None:
            for i, b in enumerate(biases):
                self.params[f"b{i}"] = np.array(b, dtype=np.float64)
        self.dilations = [int(d) for d in dilations]
        self.activation = activation
        self.bias = biases is not None

    @classmethod
    def single_channel(cls, kernels, dilations=None, activation="identity"):
        """Build a 1-in/1-out stack from plain tap vectors."""
        return cls([np.asarray(k, dtype=np.float64)[None, None, :] for k in kernels], dilations, activation)

    @classmethod
    def init(cls, rng, n_in=1, n_out=1, channels=(8,), width=2, dilations=None,
             activation="tanh", bias=False):
        sizes = [n_in, *channels, n_out]
        weights, biases = [], []
        for c_in, c_out in zip(sizes, sizes[1:]):
            weights.append(rng.normal(0.0, 1.0 / math.sqrt(c_in * width), (c_out, c_in, width)))
            biases.append(np.zeros(c_out))
        if dilations is None:
            dilations = [2**i for i in range(len(weights))]
        return cls(weights, dilations, activation, biases if bias else None)

    @property
    def n_layers(self):
        return len(self.dilations)

    @property
    def n_in(self):
        return self.params["w0"].shape[1]

    @property
    def n_out(self):
        return self.params[f"w{self.n_layers - 1}"].shape[0]

    @property
    def receptive_field(self):
        return 1 + sum((self.params[f"w{i}"].shape[2] - 1) * d for i, d in enumerate(self.dilations))

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeError(f"expected inputs (B, L, {self.n_in}), got {x.shape}")
        layer_inputs = []
        h = x
        with np.errstate(over="ignore", invalid="ignore"):
            for i, dil in enumerate(self.dilations):
                layer_inputs.append(h)
                h = _causal_conv(h, self.params[f"w{i}"], dil)
                if self.bias:
                    h = h + self.params[f"b{i}"]
                if i < self.n_layers - 1 and self.activation == "tanh":
                    h = np.tanh(h)
        if not np.all(np.isfinite(h)):
            raise NumericalError("TCN output is not finite")
        return h, layer_inputs

    def backward(self, cache, dy):
        layer_inputs = cache
        dy = np.asarray(dy, dtype=np.float64)
        expected = layer_inputs[0].shape[:2] + (self.n_out,)
        if dy.shape != expected:
            raise ShapeError(f"upstream gradient shape {dy.shape} != outputs {expected}")
        grads = {}
        g = dy
        for i in range(self.n_layers - 1, -1, -1):
            if self.bias:
                grads[f"b{i}"] = g.sum(axis=(0, 1))
            g, grads[f"w{i}"] = _causal_conv_backward(layer_inputs[i], self.params[f"w{i}"], self.dilations[i], g)
            if i > 0 and self.activation == "tanh":
                # layer_inputs[i] = tanh(pre-activation of layer i-1)
                g = g * (1.0 - layer_inputs[i] ** 2)
        return GradBundle(grads, g)

    def impulse_response(self, n):
        """Output on a unit impulse at ``t = 0`` (single-channel models)."""
        x = np.zeros((1, n, self.n_in))
        x[0, 0, :] = 1.0
        y, _ = self.forward(x)
        if self.bias:
            y = y - self.forward(np.zeros_like(x))[0]
        return y[0, :, 0] if self.n_in == self.n_out == 1 else y[0]

    def spec(self):
        return {"kind": self.kind, "activation": self.activation, "dilations": self.dilations, "bias": self.bias}

    @classmethod
    def from_spec(cls, spec, params):
        n = len(spec["dilations"])
        weights = [params[f"w{i}"] for i in range(n)]
        biases = [params[f"b{i}"] for i in range(n)] if spec.get("bias") else None
        return cls(weights, spec["dilations"], spec["activation"], biases)


MODEL_KINDS = {"rnn": RNN, "tcn": TCN}


def save_checkpoint(model: SequenceModel, path):
    """Write ``model`` as a flat named-tensor JSON file.

    Layout: ``{"model": <spec>, "tensors": [{"name", "shape", "values"}]}`` with
    tensors in name order and ``values`` the row-major float64 entries written
    with round-trip precision.
    """
    tensors = [
        {"name": name, "shape": list(arr.shape), "values": [float(v) for v in arr.ravel(order="C")]}
        for name, arr in sorted(model.params.items())
    ]
    with open(path, "w") as fh:
        json.dump({"model": model.spec(), "tensors": tensors}, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> SequenceModel:
    with open(path) as fh:
        blob = json.load(fh)
    params = {
        t["name"]: np.array(t["values"], dtype=np.float64).reshape(t["shape"])
        for t in blob["tensors"]
    }
    spec = blob["model"]
    return MODEL_KINDS[spec["kind"]].from_spec(spec, params)
