"""Small numpy neural-network substrate with explicit backward passes.

Everything runs in float64. Layers expose ``params()`` returning named
arrays that the optimizer updates in place, and ``backward`` returning
gradients under the same names.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, InvalidRate, NonFiniteGradient

ACTIVATIONS = ("relu", "identity")


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    r = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-r, r, size=shape)


def sigmoid(z):
    # tanh form is overflow-free
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray   # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise DimensionMismatch("bias length must equal weight rows")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        return cls(uniform_init(rng, (n_out, n_in), n_in), uniform_init(rng, n_out, n_in), activation)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "biases": self.biases}

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise DimensionMismatch(f"expected input dim {self.n_in}, got {x.shape[-1]}")
        z = x @ self.weights.T + self.biases
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        return y, (x, z)

    def backward(self, cache, dy: np.ndarray):
        x, z = cache
        dz = dy * (z > 0) if self.activation == "relu" else dy
        x2 = x.reshape(-1, self.n_in)
        dz2 = dz.reshape(-1, self.n_out)
        grads = {"weights": dz2.T @ x2, "biases": dz2.sum(axis=0)}
        return dz @ self.weights, grads


def dense_forward(layer: DenseLayer, x) -> np.ndarray:
    return layer.forward(x)[0]


@dataclass
class LstmCell:
    """Standard LSTM cell; gate rows are stacked as [input, forget, output, candidate]."""

    w_input: np.ndarray   # (4h, d)
    w_hidden: np.ndarray  # (4h, h)
    bias: np.ndarray      # (4h,)

    def __post_init__(self):
        self.w_input = np.asarray(self.w_input, dtype=np.float64)
        self.w_hidden = np.asarray(self.w_hidden, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        h = self.hidden_size
        if self.w_input.shape[0] != 4 * h or self.w_hidden.shape != (4 * h, h) or self.bias.shape != (4 * h,):
            raise DimensionMismatch("inconsistent LSTM gate shapes")

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "LstmCell":
        fan_in = input_size + hidden_size
        return cls(
            uniform_init(rng, (4 * hidden_size, input_size), fan_in),
            uniform_init(rng, (4 * hidden_size, hidden_size), fan_in),
            uniform_init(rng, 4 * hidden_size, fan_in),
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmCell":
        return cls(
            np.zeros((4 * hidden_size, input_size)),
            np.zeros((4 * hidden_size, hidden_size)),
            np.zeros(4 * hidden_size),
        )

    @property
    def hidden_size(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_input.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"w_input": self.w_input, "w_hidden": self.w_hidden, "bias": self.bias}

    def forward(self, seq: np.ndarray, reverse: bool = False):
        """Run over ``seq`` of shape (T, d) or (B, T, d).

        Returned hidden states are indexed by input time step regardless of
        direction, so ``out[..., t, :]`` is the state after consuming x_t.
        """
        seq = np.asarray(seq, dtype=np.float64)
        single = seq.ndim == 2
        if single:
            seq = seq[None]
        B, T, d = seq.shape
        if T < 1:
            raise DimensionMismatch("empty sequence")
        if d != self.input_size:
            raise DimensionMismatch(f"expected input dim {self.input_size}, got {d}")
        h = self.hidden_size
        hs = np.zeros((B, T, h))
        h_prev = np.zeros((B, h))
        c_prev = np.zeros((B, h))
        steps = []
        order = range(T - 1, -1, -1) if reverse else range(T)
        for t in order:
            x_t = seq[:, t]
            z = x_t @ self.w_input.T + h_prev @ self.w_hidden.T + self.bias
            ifo = sigmoid(z[:, : 3 * h])
            i, f, o = ifo[:, :h], ifo[:, h:2 * h], ifo[:, 2 * h:]
            g = np.tanh(z[:, 3 * h:])
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h_t = o * tc
            steps.append((t, x_t, h_prev, c_prev, i, f, o, g, tc))
            hs[:, t] = h_t
            h_prev, c_prev = h_t, c
        out = hs[0] if single else hs
        return out, (single, steps, (B, T, d))

    def backward(self, cache, d_hidden: np.ndarray):
        """Backprop through time; ``d_hidden`` matches the forward output shape."""
        single, steps, (B, T, d) = cache
        dh_all = np.asarray(d_hidden, dtype=np.float64)
        if single:
            dh_all = dh_all[None]
        h = self.hidden_size
        g_wi = np.zeros_like(self.w_input)
        g_wh = np.zeros_like(self.w_hidden)
        g_b = np.zeros_like(self.bias)
        dx = np.zeros((B, T, d))
        dh_next = np.zeros((B, h))
        dc_next = np.zeros((B, h))
        for t, x_t, h_prev, c_prev, i, f, o, g, tc in reversed(steps):
            dh = dh_all[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dh * tc * o * (1.0 - o),
                    dc * i * (1.0 - g * g),
                ],
                axis=1,
            )
            g_wi += dz.T @ x_t
            g_wh += dz.T @ h_prev
            g_b += dz.sum(axis=0)
            dx[:, t] = dz @ self.w_input
            dh_next = dz @ self.w_hidden
            dc_next = dc * f
        grads = {"w_input": g_wi, "w_hidden": g_wh, "bias": g_b}
        return (dx[0] if single else dx), grads


def lstm_forward(cell: LstmCell, sequence, direction: str = "forward") -> np.ndarray:
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', not {direction!r}")
    return cell.forward(sequence, reverse=direction == "backward")[0]


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"{pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - target) / pred.size


def check_rate(p: float) -> None:
    if not (0.0 <= p < 1.0):
        raise InvalidRate(f"dropout rate must be in [0, 1), got {p}")


def dropout_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability p, survivors scaled by 1/(1-p)."""
    check_rate(p)
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def dropout_forward(x, p: float, rng: np.random.Generator | None = None, training: bool = True) -> np.ndarray:
    check_rate(p)
    x = np.asarray(x, dtype=np.float64)
    if not training or p == 0.0:
        return x.copy()
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    return x * dropout_mask(x.shape, p, rng)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """One bias-corrected Adam update, applied to ``params`` in place.

    An all-zero gradient is treated as a no-op: neither the parameters nor
    the moment estimates move.
    """
    if set(grads) != set(params):
        raise DimensionMismatch(f"gradient keys {sorted(grads)} != parameter keys {sorted(params)}")
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise DimensionMismatch(f"{k}: grad {g.shape} vs param {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(k)
    if all(not np.any(g) for g in grads.values()):
        return params, state
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, g in grads.items():
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros_like(g)
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[k] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def numerical_gradient(f: Callable[[], float], params: dict[str, np.ndarray], step: float = 1e-5):
    """Central finite differences of ``f()`` w.r.t. every entry of ``params`` (perturbed in place)."""
    out = {}
    for k, p in params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + step
            fp = f()
            flat[j] = old - step
            fm = f()
            flat[j] = old
            gflat[j] = (fp - fm) / (2.0 * step)
        out[k] = g
    return out


def max_relative_error(analytic: dict, numeric: dict, floor: float = 1e-8) -> float:
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def prefixed(prefix: str, d: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v for k, v in d.items()}
