"""Minimal dense-network engine: forward, reverse-mode gradients, Adam.

Networks are rectified-linear MLPs with a linear output head, stored as
64-bit weight matrices and bias vectors.  Gradients are computed by hand
(no autograd) and validated against central finite differences by
``grad_check``.  Masked categorical distributions give invalid actions a
probability of exactly zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AllMasked, ShapeError


class DenseNet:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        if len(sizes) < 2:
            raise ShapeError("a network needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(2.0 / fan_in)
            w = rng.normal(0.0, scale, size=(fan_out, fan_in))
            if i == len(self.sizes) - 2:
                w *= 0.01  # near-uniform initial outputs
            self.weights.append(w.astype(np.float64))
            self.biases.append(np.zeros(fan_out, dtype=np.float64))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...]; arrays are live views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        expected = self.n_layers * 2
        if len(params) != expected:
            raise ShapeError(f"expected {expected} parameter blocks, got {len(params)}")
        for i in range(self.n_layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeError(f"parameter block {i} has wrong shape")
            self.weights[i] = np.array(w, dtype=np.float64)
            self.biases[i] = np.array(b, dtype=np.float64)

    def copy_parameters(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def _check_input(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ShapeError(f"input shape {x.shape} does not match input size {self.sizes[0]}")
        return x, single

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping the per-layer inputs needed by backward."""
        a, single = self._check_input(x)
        cache = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            cache.append((a, z))
            a = z if i == self.n_layers - 1 else np.maximum(z, 0.0)
        if single:
            return a[0], (cache, single)
        return a, (cache, single)

    def backward(self, cache, grad_output: np.ndarray) -> list[np.ndarray]:
        """Exact reverse-mode gradients for the cached forward pass.

        ``grad_output`` is dLoss/dOutput; returns gradients aligned with
        ``parameters()``.
        """
        layer_cache, single = cache
        g = np.asarray(grad_output, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != (layer_cache[-1][1].shape):
            raise ShapeError(
                f"grad_output shape {g.shape} does not match output {layer_cache[-1][1].shape}")
        grads: list[np.ndarray] = [None] * (self.n_layers * 2)
        for i in range(self.n_layers - 1, -1, -1):
            a_prev, z = layer_cache[i]
            if i != self.n_layers - 1:
                g = g * (z > 0.0)
            grads[2 * i] = g.T @ a_prev
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i]
        return grads


# masked categorical -----------------------------------------------------------

def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(probs, log-probs) over the unmasked entries; masked probs are 0.0.

    Works on single vectors or batches; uses max-subtraction so logits in
    [-1e3, 1e3] stay finite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if logits.shape != mask.shape:
        raise ShapeError(f"logits {logits.shape} vs mask {mask.shape}")
    if not mask.any(axis=-1).all():
        raise AllMasked("mask has no valid entry")
    neg = np.where(mask, logits, -np.inf)
    peak = neg.max(axis=-1, keepdims=True)
    shifted = np.where(mask, logits - peak, -np.inf)
    expd = np.where(mask, np.exp(np.where(mask, logits - peak, 0.0)), 0.0)
    total = expd.sum(axis=-1, keepdims=True)
    probs = expd / total
    log_probs = np.where(mask, shifted - np.log(total), -np.inf)
    return probs, log_probs


@dataclass
class MaskedCategorical:
    """Categorical distribution with hard-zero probability on masked actions."""

    logits: np.ndarray
    mask: np.ndarray
    probs: np.ndarray = field(init=False)
    log_probs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.logits.ndim != 1:
            raise ShapeError("MaskedCategorical takes a single logit vector")
        self.probs, self.log_probs = masked_log_softmax(self.logits, self.mask)

    def sample(self, rng: np.random.Generator) -> int:
        u = rng.random()
        cumulative = np.cumsum(self.probs)
        idx = int(np.searchsorted(cumulative, u, side="right"))
        valid = np.flatnonzero(self.mask)
        if idx >= len(self.probs) or not self.mask[idx]:
            idx = int(valid[-1])
        return idx

    def argmax(self) -> int:
        masked = np.where(self.mask, self.probs, -1.0)
        return int(np.argmax(masked))

    def log_prob(self, action: int) -> float:
        return float(self.log_probs[action])

    def entropy(self) -> float:
        terms = np.where(self.probs > 0.0, self.probs * np.where(self.mask, self.log_probs, 0.0), 0.0)
        return float(-terms.sum())


def masked_categorical(logits: np.ndarray, mask: np.ndarray) -> MaskedCategorical:
    return MaskedCategorical(logits, mask)


# Adam ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place Adam update over a list of parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params/grads/state length mismatch")
    state.step += 1
    t = state.step
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


# gradient verification -----------------------------------------------------------

@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    block_errors: list[float]


def grad_check(net: DenseNet, loss_fn: Callable[[DenseNet], tuple[float, list[np.ndarray]]],
               tolerance: float = 1e-4, step: float = 1e-5) -> GradCheckReport:
    """Compare ``loss_fn``'s analytic gradients against central differences.

    ``loss_fn(net)`` must return (loss, grads aligned with net.parameters())
    evaluated at the network's current parameters.
    """
    _, analytic = loss_fn(net)
    params = net.parameters()
    block_errors = []
    for block, grad in zip(params, analytic):
        fd = np.zeros_like(block)
        flat = block.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up, _ = loss_fn(net)
            flat[i] = original - step
            down, _ = loss_fn(net)
            flat[i] = original
            fd_flat[i] = (up - down) / (2.0 * step)
        denom = np.maximum(np.abs(grad) + np.abs(fd), 1e-6)
        block_errors.append(float((np.abs(grad - fd) / denom).max()) if flat.size else 0.0)
    worst = max(block_errors) if block_errors else 0.0
    return GradCheckReport(passed=worst < tolerance, max_rel_error=worst,
                           block_errors=block_errors)


# checkpoint serialization ---------------------------------------------------------

CHECKPOINT_VERSION = 1


def dump_net_arrays(prefix: str, net: DenseNet, out: dict) -> None:
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}_w{i}"] = w
        out[f"{prefix}_b{i}"] = b


def load_net_arrays(prefix: str, sizes: Sequence[int], data) -> DenseNet:
    net = DenseNet(sizes)
    net.weights = [np.array(data[f"{prefix}_w{i}"], dtype=np.float64) for i in range(net.n_layers)]
    net.biases = [np.array(data[f"{prefix}_b{i}"], dtype=np.float64) for i in range(net.n_layers)]
    return net


def dump_adam_arrays(prefix: str, state: AdamState, out: dict) -> None:
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        out[f"{prefix}_m{i}"] = m
        out[f"{prefix}_v{i}"] = v


def load_adam_arrays(prefix: str, step: int, n_blocks: int, data) -> AdamState:
    return AdamState(
        step=step,
        m=[np.array(data[f"{prefix}_m{i}"], dtype=np.float64) for i in range(n_blocks)],
        v=[np.array(data[f"{prefix}_v{i}"], dtype=np.float64) for i in range(n_blocks)],
    )
