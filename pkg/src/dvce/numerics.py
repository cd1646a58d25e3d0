"""Dense vector math: seeded RNG streams, a small trainable MLP with
hand-derived gradients, Adam, finite differences, and text checkpoints.

Vectors are plain 1-D float64 numpy arrays throughout the package; batches
are 2-D arrays with one sample per row.
"""

from __future__ import annotations

import numpy as np

NET_MAGIC = "DVCE-NET v1"

_ACTIVATIONS = ("tanh", "relu")


class Rng:
    """Seeded random stream. Same seed -> identical stream within one build.

    Independent substreams are derived by index via ``stream(i)``; a stream
    is single-owner and must not be shared across parallel tasks.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def stream(self, index: int) -> "Rng":
        """Independent substream number `index` of the same seed."""
        return Rng(self.seed, index)

    def standard_normal(self, *shape: int) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, seq, size=None):
        return self._gen.choice(seq, size=size)


def sample_standard_normal(rng: Rng, n: int) -> np.ndarray:
    """n i.i.d. N(0,1) draws, advancing the stream."""
    if n < 1:
        raise ValueError("need n >= 1")
    return rng.standard_normal(n)


def finite_difference_gradient(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function, the oracle for
    every analytic gradient in this package."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fp = f(x + e)
        fm = f(x - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise RuntimeError(f"non-finite function value at coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g


class SmallNet:
    """Fully connected net, tanh or relu hidden layers, linear output.

    Weights W[i] have shape (fan_out, fan_in); forward is x -> W x + b per
    layer. Immutable by convention once training finishes.
    """

    def __init__(self, dims, activation: str = "tanh", rng: Rng | None = None):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.dims = [int(d) for d in dims]
        self.activation = activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for din, dout in zip(self.dims[:-1], self.dims[1:]):
            if rng is None:
                w = np.zeros((dout, din))
            else:
                w = rng.standard_normal(dout, din) / np.sqrt(din)
            self.weights.append(w)
            self.biases.append(np.zeros(dout))

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    @property
    def n_params(self) -> int:
        return sum((din + 1) * dout for din, dout in zip(self.dims[:-1], self.dims[1:]))

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def _act_deriv(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return 1.0 - a * a
        return (z > 0.0).astype(float)

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.in_dim:
            raise ValueError(f"input dim {X.shape[-1]} != {self.in_dim}")
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            h = z if i == last else self._act(z)
        return h

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_batch(np.asarray(x, dtype=float)[None, :])[0]

    def _forward_cache(self, X: np.ndarray):
        hs = [X]  # post-activation inputs to each layer
        zs = []
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            zs.append(z)
            h = z if i == last else self._act(z)
            hs.append(h)
        return hs, zs

    def backward_batch(self, X: np.ndarray, U: np.ndarray):
        """Gradients of sum_n <U[n], forward(X[n])> w.r.t. parameters and X.

        Returns (grads, dX) where grads is a list of (dW, db) per layer.
        """
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        if X.shape[-1] != self.in_dim or U.shape[-1] != self.out_dim:
            raise ValueError("shape mismatch in backward")
        hs, zs = self._forward_cache(X)
        grads = [None] * len(self.weights)
        delta = U
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                delta = delta * self._act_deriv(zs[i], hs[i + 1])
            dW = delta.T @ hs[i]
            db = delta.sum(axis=0)
            grads[i] = (dW, db)
            delta = delta @ self.weights[i]
        return grads, delta

    def backward(self, x: np.ndarray, upstream: np.ndarray):
        grads, dX = self.backward_batch(
            np.asarray(x, dtype=float)[None, :], np.asarray(upstream, dtype=float)[None, :]
        )
        return grads, dX[0]

    def copy(self) -> "SmallNet":
        net = SmallNet(self.dims, self.activation)
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net


def net_forward(net: SmallNet, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def net_backward(net: SmallNet, x: np.ndarray, upstream: np.ndarray):
    return net.backward(x, upstream)


class Adam:
    """Adam over a SmallNet's (weights, biases)."""

    def __init__(self, net: SmallNet, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [(np.zeros_like(w), np.zeros_like(b))
                  for w, b in zip(net.weights, net.biases)]
        self.v = [(np.zeros_like(w), np.zeros_like(b))
                  for w, b in zip(net.weights, net.biases)]

    def step(self, net: SmallNet, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for i, (dW, db) in enumerate(grads):
            mW, mb = self.m[i]
            vW, vb = self.v[i]
            mW[:] = b1 * mW + (1 - b1) * dW
            mb[:] = b1 * mb + (1 - b1) * db
            vW[:] = b2 * vW + (1 - b2) * dW * dW
            vb[:] = b2 * vb + (1 - b2) * db * db
            net.weights[i] -= self.lr * (mW / c1) / (np.sqrt(vW / c2) + self.eps)
            net.biases[i] -= self.lr * (mb / c1) / (np.sqrt(vb / c2) + self.eps)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_net(path, net: SmallNet, extra: dict[str, str] | None = None) -> None:
    """Text checkpoint. Line 1 magic, line 2 dims, line 3 activation, then
    optional key=value header lines, then per-layer blocks (weight rows
    followed by the bias row), blocks separated by blank lines."""
    lines = [NET_MAGIC,
             " ".join(str(d) for d in net.dims),
             net.activation]
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    for W, b in zip(net.weights, net.biases):
        lines.append("")
        for row in W:
            lines.append(" ".join(_fmt(v) for v in row))
        lines.append(" ".join(_fmt(v) for v in b))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_net(path) -> tuple[SmallNet, dict[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != NET_MAGIC:
        raise ValueError(f"not a {NET_MAGIC} checkpoint: {path}")
    dims = [int(v) for v in lines[1].split()]
    activation = lines[2].strip()
    i = 3
    extra: dict[str, str] = {}
    while i < len(lines) and lines[i] != "":
        k, _, v = lines[i].partition("=")
        extra[k] = v
        i += 1
    net = SmallNet(dims, activation)
    for li, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        i += 1  # blank separator
        W = np.array([[float(v) for v in lines[i + r].split()] for r in range(dout)])
        b = np.array([float(v) for v in lines[i + dout].split()])
        if W.shape != (dout, din) or b.shape != (dout,):
            raise ValueError(f"malformed layer block {li} in {path}")
        net.weights[li] = W
        net.biases[li] = b
        i += dout + 1
    return net, extra
