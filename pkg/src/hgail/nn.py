"""Dense tanh networks with hand-written gradients.

Three fixed architectures live on top of :class:`MlpParams`: the policy mean
network, the value network and the discriminator. All of them are tanh MLPs
with a linear output layer, so a single forward/backward pair covers them.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels

LOG_2PI = math.log(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when array shapes do not match a network's layout."""


class MlpParams:
    """Weights and biases of a tanh MLP.

    ``weights[i]`` has shape (out_i, in_i); ``biases[i]`` has shape (out_i,).
    All of them are views into one flat buffer, ``data``, so optimizers can
    update every parameter with a single vector operation. The same class
    doubles as the gradient container.
    """

    def __init__(self, weights, biases):
        weights = [np.asarray(w, dtype=np.float64) for w in weights]
        biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(weights) != len(biases) or not weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i > 0 and w.shape[1] != weights[i - 1].shape[0]:
                raise ShapeError(
                    f"layer {i} expects {w.shape[1]} inputs, "
                    f"layer {i - 1} produces {weights[i - 1].shape[0]}"
                )
        sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
        self._bind(sizes, np.empty(_count(sizes)))
        for dst, src in zip(self.arrays(), _interleave(weights, biases)):
            dst[...] = src

    def _bind(self, sizes, data):
        self.data = data
        self.weights, self.biases = [], []
        for w0, w1, shape, b1 in _layout(tuple(sizes)):
            self.weights.append(data[w0:w1].reshape(shape))
            self.biases.append(data[w1:b1])

    @classmethod
    def from_flat(cls, sizes, data) -> "MlpParams":
        data = np.asarray(data, dtype=np.float64)
        if data.shape != (_count(sizes),):
            raise ShapeError(f"expected {_count(sizes)} values, got {data.shape}")
        obj = cls.__new__(cls)
        obj._bind(list(sizes), data)
        return obj

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "MlpParams":
        """Uniform scaled init, a = sqrt(6 / (fan_in + fan_out)); zero biases."""
        out = cls.zeros(sizes)
        for w in out.weights:
            fan_out, fan_in = w.shape
            a = math.sqrt(6.0 / (fan_in + fan_out))
            w[...] = rng.uniform(-a, a, size=w.shape)
        return out

    @classmethod
    def zeros(cls, sizes) -> "MlpParams":
        return cls.from_flat(sizes, np.zeros(_count(sizes)))

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_params(self) -> int:
        return self.data.size

    def arrays(self) -> list[np.ndarray]:
        return _interleave(self.weights, self.biases)

    def copy(self) -> "MlpParams":
        return MlpParams.from_flat(self.sizes, self.data.copy())

    def zeros_like(self) -> "MlpParams":
        return MlpParams.zeros(self.sizes)

    def _blank_like(self) -> "MlpParams":
        # uninitialized buffer for kernels that overwrite every entry
        obj = MlpParams.__new__(MlpParams)
        obj._bind(self.sizes, np.empty(self.data.size))
        return obj

    def flat(self) -> np.ndarray:
        return self.data.copy()

    def with_flat(self, vec: np.ndarray) -> "MlpParams":
        return MlpParams.from_flat(self.sizes, np.array(vec, dtype=np.float64))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def equals(self, other: "MlpParams") -> bool:
        return self.sizes == other.sizes and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        return f"MlpParams(sizes={self.sizes})"


@functools.lru_cache(maxsize=None)
def _layout(sizes: tuple) -> tuple:
    """(weight start, weight end, weight shape, bias end) per layer."""
    out, pos = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w_end = pos + fan_in * fan_out
        out.append((pos, w_end, (fan_out, fan_in), w_end + fan_out))
        pos = w_end + fan_out
    return tuple(out)


def _count(sizes) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


def _interleave(weights, biases) -> list:
    out = []
    for w, b in zip(weights, biases):
        out.extend((w, b))
    return out


# Gradients share the parameter layout.
Gradient = MlpParams


@dataclass
class ForwardCache:
    inputs: np.ndarray
    acts: list[np.ndarray]
    squeeze: bool
    squashed: np.ndarray | None = None


def forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a single vector or a (batch, in) array."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = np.ascontiguousarray(x[None, :] if squeeze else x)
    if x2.ndim != 2 or x2.shape[1] != params.input_dim:
        raise ShapeError(f"input shape {x.shape} does not match input size {params.input_dim}")
    out, acts = kernels.mlp_forward(params.weights, params.biases, x2)
    return (out[0] if squeeze else out), ForwardCache(x2, acts, squeeze)


def predict(params: MlpParams, x) -> np.ndarray:
    return forward(params, x)[0]


def backward(params: MlpParams, cache: ForwardCache, output_grad) -> tuple[Gradient, np.ndarray]:
    """Reverse-mode gradient of ``sum(output * output_grad)``.

    Returns the parameter gradient (summed over the batch) and the gradient
    with respect to the input, shaped like the forward input.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    expected = (cache.inputs.shape[0], params.output_dim)
    if g.shape != expected:
        raise ShapeError(f"output grad shape {g.shape}, expected {expected}")
    grad = params._blank_like()
    gx = kernels.mlp_backward(params.weights, cache.inputs, cache.acts, np.ascontiguousarray(g),
                              grad.weights, grad.biases)
    return grad, (gx[0] if cache.squeeze else gx)


@dataclass(frozen=True)
class InputScaler:
    """Fixed affine map ``(x - shift) * scale`` applied before a network."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        shift = np.asarray(self.shift, dtype=np.float64)
        scale = np.asarray(self.scale, dtype=np.float64)
        if shift.ndim != 1 or shift.shape != scale.shape:
            raise ShapeError("shift and scale must be 1-D arrays of equal length")
        if not (np.isfinite(shift).all() and np.isfinite(scale).all()) or np.any(scale == 0):
            raise ValueError("scaler entries must be finite with non-zero scale")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls, dim: int) -> "InputScaler":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.shift) * self.scale

    def as_array(self) -> np.ndarray:
        return np.stack([self.shift, self.scale])

    @classmethod
    def from_array(cls, arr) -> "InputScaler":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != 2:
            raise ShapeError("scaler array must have shape (2, dim)")
        return cls(arr[0], arr[1])


def _scaled(scaler, x):
    return x if scaler is None else scaler(x)


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian with an MLP mean.

    ``log_std`` holds one entry per action dimension. It stays fixed unless
    ``learn_std`` is set, in which case the optimizer updates it too.
    """

    mean_net: MlpParams
    log_std: np.ndarray = field(default=None)
    learn_std: bool = False
    scaler: InputScaler | None = None
    mean_bound: float | None = None

    def __post_init__(self):
        if self.log_std is None:
            self.log_std = np.zeros(self.action_dim)
        self.log_std = np.asarray(self.log_std, dtype=np.float64)
        if self.log_std.shape != (self.action_dim,):
            raise ShapeError("log_std must have one entry per action dimension")
        if self.scaler is not None and self.scaler.shift.shape != (self.mean_net.input_dim,):
            raise ShapeError("scaler length must match the network input")
        if self.mean_bound is not None and not self.mean_bound > 0:
            raise ValueError("mean_bound must be positive")

    @classmethod
    def init(cls, input_dim: int, action_dim: int, rng, hidden=(64, 64), cov: float = 1.0, learn_std=False,
             scaler: InputScaler | None = None, mean_bound: float | None = None):
        if cov <= 0:
            raise ValueError("covariance must be positive")
        net = MlpParams.init([input_dim, *hidden, action_dim], rng)
        return cls(net, np.full(action_dim, 0.5 * math.log(cov)), learn_std, scaler, mean_bound)

    @property
    def action_dim(self) -> int:
        return self.mean_net.output_dim

    @property
    def variance(self) -> np.ndarray:
        return np.exp(2.0 * self.log_std)

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.copy(), self.log_std.copy(), self.learn_std, self.scaler,
                              self.mean_bound)

    def inputs(self, state_goal) -> np.ndarray:
        return _scaled(self.scaler, state_goal)

    def mean_forward(self, state_goal) -> tuple[np.ndarray, ForwardCache]:
        """Mean and the cache needed by :meth:`mean_backward`.

        With ``mean_bound`` set the mean is ``bound * tanh(net(x))``.
        """
        out, cache = forward(self.mean_net, self.inputs(state_goal))
        if self.mean_bound is None:
            return out, cache
        squashed = np.tanh(out)
        cache.squashed = squashed
        return self.mean_bound * squashed, cache

    def mean_backward(self, cache: ForwardCache, mean_grad) -> Gradient:
        if self.mean_bound is not None:
            t = cache.squashed
            mean_grad = mean_grad * (self.mean_bound * (1.0 - t * t))
        return backward(self.mean_net, cache, mean_grad)[0]

    def mean(self, state_goal) -> np.ndarray:
        return self.mean_forward(state_goal)[0]

    def sample(self, state_goal, rng) -> tuple[np.ndarray, np.ndarray]:
        """Draw actions and return them with their log-probabilities."""
        mu = self.mean(state_goal)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(mu.shape)
        actions = mu + std * noise
        logp = -0.5 * (noise * noise).sum(axis=-1) - (self.action_dim * 0.5 * LOG_2PI + self.log_std.sum())
        return actions, logp


def gaussian_log_prob(mean, log_std, actions) -> np.ndarray:
    z = (np.asarray(actions) - mean) * np.exp(-log_std)
    k = np.shape(mean)[-1]
    return -0.5 * np.sum(z * z, axis=-1) - 0.5 * k * LOG_2PI - np.sum(log_std)


def policy_log_prob(policy: GaussianPolicy, state_goal, action):
    """Log-density of ``action`` under N(mean_net(state_goal), diag(variance))."""
    return gaussian_log_prob(policy.mean(state_goal), policy.log_std, action)


def policy_entropy(policy: GaussianPolicy) -> float:
    k = policy.action_dim
    return float(0.5 * k * (1.0 + LOG_2PI) + np.sum(policy.log_std))


@dataclass
class GradCheckReport:
    max_rel_error: float
    rel_errors: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic, numeric, floor: float = 1e-4) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries sane."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def finite_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of a flat vector."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = fn(x)
        x[i] = old - h
        fm = fn(x)
        x[i] = old
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"loss is not finite around parameter {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def grad_check(params: MlpParams, loss, tolerance: float = 1e-5, h: float = 1e-5) -> GradCheckReport:
    """Compare an analytic gradient against central finite differences.

    ``loss(params)`` must return ``(value, gradient)`` where the gradient is
    an :class:`MlpParams` of the same layout.
    """
    value, grad = loss(params)
    if not math.isfinite(value):
        raise FloatingPointError("loss is not finite at the check point")
    analytic = grad.flat()
    numeric = finite_difference(lambda v: float(loss(params.with_flat(v))[0]), params.flat(), h)
    errors = relative_error(analytic, numeric)
    return GradCheckReport(float(errors.max(initial=0.0)), errors, analytic, numeric, tolerance)
