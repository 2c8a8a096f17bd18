"""Parameter bookkeeping, Adam, gradient clipping, and LR scheduling."""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def bias_init(rng: np.random.Generator, fan_in: int, size: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)). Nonzero biases keep ReLU
    pre-activations off the exact kink for rows zeroed by empty-segment
    aggregation."""
    limit = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-limit, limit, size=size)


class ParameterStore:
    """Named trainable tensors plus non-trainable float buffers.

    Insertion order is deterministic, so a fixed seed yields a bit-identical
    parameter vector across runs.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def add_buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        if name in self.buffers:
            raise ValueError(f"duplicate buffer {name!r}")
        arr = np.asarray(data, dtype=np.float64)
        self.buffers[name] = arr
        return arr

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"param/{k}": v.data for k, v in self.params.items()}
        out.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for key, value in arrays.items():
            kind, _, name = key.partition("/")
            if kind == "param":
                target = self.params[name]
                if target.data.shape != value.shape:
                    raise ValueError(
                        f"shape mismatch loading {name!r}: "
                        f"{target.data.shape} vs {value.shape}")
                target.data = value.astype(np.float64).copy()
            elif kind == "buffer":
                buf = self.buffers[name]
                buf[...] = value
            else:
                raise ValueError(f"unrecognized state key {key!r}")


def clip_grad_norm(store: ParameterStore, max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm. The scale factor is exactly max_norm / norm,
    so a norm of 2 with max_norm 1 halves every gradient.
    """
    total = 0.0
    for t in store.params.values():
        if t.grad is not None:
            total += float((t.grad ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for t in store.params.values():
            if t.grad is not None:
                t.grad *= scale
    return norm


class Adam:
    """Adam with bias-corrected first/second moments."""

    def __init__(self, store: ParameterStore, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in store.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in store.params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.store.params.items():
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad ** 2
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class PlateauScheduler:
    """Halve the learning rate when the watched metric stops improving.

    With ``mode='min'`` a metric is an improvement when it is strictly lower
    than the best seen. After ``patience`` consecutive non-improving epochs the
    rate is multiplied by ``factor`` (never below ``min_lr``) and the stall
    counter resets.
    """

    def __init__(self, optimizer: Adam, factor: float = 0.5, patience: int = 5,
                 min_lr: float = 1e-5, mode: str = "min"):
        if mode not in ("min", "max"):
            raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.mode = mode
        self.best: float | None = None
        self.stalled = 0

    def step(self, metric: float) -> float:
        improved = (self.best is None
                    or (self.mode == "min" and metric < self.best)
                    or (self.mode == "max" and metric > self.best))
        if improved:
            self.best = metric
            self.stalled = 0
        else:
            self.stalled += 1
            if self.stalled > self.patience:
                self.optimizer.lr = max(self.optimizer.lr * self.factor,
                                        self.min_lr)
                self.stalled = 0
        return self.optimizer.lr
