"""Learned-function substrate: a small rectifier network trained by plain
SGD with hand-written gradients, and the per-action episodic key-value
store used for fast value estimates.

No autodiff framework: gradients are explicit so they can be checked
against finite differences, and checkpoints are a documented flat binary
layout (see save_checkpoint) that is byte-stable for a given seed.
"""

from __future__ import annotations

import struct

import numpy as np

CHECKPOINT_MAGIC = b"QMLP"
CHECKPOINT_VERSION = 1


class Mlp:
    """Fully-connected net: rectifier hidden layers, identity output."""

    def __init__(self, widths: list[int], rng: np.random.Generator | None = None):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        self.widths = list(widths)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            self.weights.append(w)
            self.biases.append(b)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def _forward_full(self, x: np.ndarray) -> list[np.ndarray]:
        """Activations per layer (input first, output last)."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def forward(self, x) -> np.ndarray:
        """Action values for one state vector."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.in_dim,):
            raise ValueError(f"expected input of length {self.in_dim}, got {x.shape}")
        return self._forward_full(x[None, :])[-1][0]

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected batch of width {self.in_dim}, got {x.shape}")
        return self._forward_full(x)[-1]

    def embed(self, x) -> np.ndarray:
        """First hidden layer activations; the episodic-store key."""
        x = np.asarray(x, dtype=np.float64)
        return self._forward_full(x[None, :])[1][0]

    def embed_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self._forward_full(x)[1]

    def loss_and_grads(self, inputs, action_indices, targets):
        """Mean squared error on the selected action values, plus gradients.

        Pure: nothing is mutated, so tests can compare the returned
        gradients against central finite differences of the loss.
        """
        x = np.asarray(inputs, dtype=np.float64)
        acts_idx = np.asarray(action_indices, dtype=np.intp)
        targets = np.asarray(targets, dtype=np.float64)
        n = x.shape[0]
        if not (n == acts_idx.shape[0] == targets.shape[0]):
            raise ValueError("batch length mismatch")
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets must be finite")

        acts = self._forward_full(x)
        preds = acts[-1][np.arange(n), acts_idx]
        err = preds - targets
        loss = float(np.mean(err**2))

        delta = np.zeros_like(acts[-1])
        delta[np.arange(n), acts_idx] = 2.0 * err / n
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return loss, grads_w, grads_b

    def train_batch(self, inputs, action_indices, targets, learning_rate) -> float:
        """One SGD step; returns the pre-step loss."""
        loss, grads_w, grads_b = self.loss_and_grads(inputs, action_indices, targets)
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite training loss {loss}")
        for w, b, gw, gb in zip(self.weights, self.biases, grads_w, grads_b):
            w -= learning_rate * gw
            b -= learning_rate * gb
        return loss

    def copy_from(self, other: "Mlp") -> None:
        if self.widths != other.widths:
            raise ValueError("width mismatch")
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def clone(self) -> "Mlp":
        m = Mlp(self.widths)
        m.copy_from(self)
        return m


def save_checkpoint(m: Mlp, path) -> None:
    """Flat binary layout: magic `QMLP`, version byte, u8 width count,
    little-endian u32 widths, then per layer the row-major f64 weight
    matrix followed by the f64 bias vector."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<BB", CHECKPOINT_VERSION, len(m.widths)))
        fh.write(struct.pack(f"<{len(m.widths)}I", *m.widths))
        for w, b in zip(m.weights, m.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> Mlp:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, n_widths = struct.unpack_from("<BB", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    widths = list(struct.unpack_from(f"<{n_widths}I", data, 6))
    offset = 6 + 4 * n_widths
    m = Mlp(widths)
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w_bytes = 8 * fan_in * fan_out
        m.weights[i] = (
            np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset)
            .reshape(fan_in, fan_out)
            .astype(np.float64)
        )
        offset += w_bytes
        m.biases[i] = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset).astype(
            np.float64
        )
        offset += 8 * fan_out
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return m


class Dnd:
    """Episodic store for one action: keys, scalar values, LRU eviction.

    Lookup is a kernel-weighted average over the nearest stored keys with
    kernel w ∝ 1 / (squared distance + smoothing).
    """

    def __init__(self, key_dim: int, capacity: int, neighbors: int, smoothing: float):
        if capacity < 1 or neighbors < 1:
            raise ValueError("capacity and neighbors must be at least 1")
        self.key_dim = key_dim
        self.capacity = capacity
        self.neighbors = neighbors
        self.smoothing = smoothing
        n0 = min(64, capacity)
        self._keys = np.empty((n0, key_dim), dtype=np.float64)
        self._values = np.empty(n0, dtype=np.float64)
        self._last_use = np.zeros(n0, dtype=np.int64)
        self._size = 0
        self._clock = 0
        self._by_key: dict[bytes, int] = {}

    def __len__(self) -> int:
        return self._size

    @property
    def keys(self) -> np.ndarray:
        return self._keys[: self._size]

    @property
    def values(self) -> np.ndarray:
        return self._values[: self._size]

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    def _weights_for(self, d2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        order = np.argsort(d2, kind="stable")[: min(self.neighbors, d2.shape[0])]
        w = 1.0 / (d2[order] + self.smoothing)
        return order, w / w.sum()

    def lookup(self, key) -> float:
        """Kernel-weighted value of the nearest stored neighbors."""
        if self._size == 0:
            raise LookupError("lookup on an empty store")
        key = np.asarray(key, dtype=np.float64)
        d2 = ((self.keys - key) ** 2).sum(axis=1)
        idx, w = self._weights_for(d2)
        self._last_use[idx] = self._tick()
        return float(w @ self.values[idx])

    def lookup_batch(self, queries: np.ndarray) -> np.ndarray:
        """Vectorized lookup for a batch of query keys."""
        if self._size == 0:
            raise LookupError("lookup on an empty store")
        q = np.asarray(queries, dtype=np.float64)
        k = self.keys
        d2 = (q**2).sum(axis=1)[:, None] + (k**2).sum(axis=1)[None, :] - 2.0 * (q @ k.T)
        np.maximum(d2, 0.0, out=d2)
        tick = self._tick()
        out = np.empty(q.shape[0])
        for i in range(q.shape[0]):
            idx, w = self._weights_for(d2[i])
            self._last_use[idx] = tick
            out[i] = w @ self.values[idx]
        return out

    def _grow(self) -> None:
        n = self._keys.shape[0]
        if self._size < n:
            return
        n2 = min(self.capacity, max(2 * n, 64))
        self._keys = np.resize(self._keys, (n2, self.key_dim))
        self._values = np.resize(self._values, n2)
        last = np.zeros(n2, dtype=np.int64)
        last[: self._size] = self._last_use[: self._size]
        self._last_use = last

    def write(self, key, value: float, alpha: float) -> None:
        """Move an exact-match key's value by alpha toward the new value,
        or append; evict the least-recently-used entry at capacity."""
        if not np.isfinite(value):
            raise ValueError("value must be finite")
        key = np.ascontiguousarray(key, dtype=np.float64)
        kb = key.tobytes()
        row = self._by_key.get(kb)
        if row is not None:
            self._values[row] += alpha * (value - self._values[row])
            self._last_use[row] = self._tick()
            return
        if self._size >= self.capacity:
            row = int(np.argmin(self._last_use[: self._size]))
            del self._by_key[self._keys[row].tobytes()]
        else:
            self._grow()
            row = self._size
            self._size += 1
        self._keys[row] = key
        self._values[row] = value
        self._last_use[row] = self._tick()
        self._by_key[kb] = row
