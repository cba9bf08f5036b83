"""Dense ReLU MLP with hand-derived gradients, Adam, and optional
spectral-norm Lipschitz control.

The network is deliberately small and self-contained: forward passes,
reverse-mode gradients, and the optimizer are explicit numpy so training is
bit-deterministic given (config, seed, data order). When a Lipschitz scale m
is configured, every weight matrix is divided by its top singular value
(estimated by persistent power iteration) and the final output is multiplied
by m, so the network's Lipschitz constant is bounded by m times the product
of the (approximately unit) layer norms.

Per-sample training targets come in three shapes: a plain target value, an
interval scored by the projection loss, or an interval scored by the
worst-case loss. Subgradients at the piecewise kinks (interval boundaries,
worst-case midpoint, ReLU origin) are 0.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import Interval, LossFamily, pow_abs, pow_abs_grad
from .intervalgen import philox_stream

__all__ = [
    "MlpConfig",
    "MlpParams",
    "Gradients",
    "AdamState",
    "ProjectionTarget",
    "WorstcaseTarget",
    "PointwiseTarget",
    "TargetBatch",
    "init_params",
    "spectral_normalize",
    "finalize_spectral",
    "forward",
    "predict",
    "loss_and_grad",
    "batch_loss_and_grad",
    "batch_loss",
    "adam_step",
    "estimate_lipschitz_constant",
    "save_checkpoint",
    "load_checkpoint",
]

_STREAM_WEIGHTS = 10
_STREAM_POWER = 11
_STREAM_PAIRS = 12

_SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class MlpConfig:
    """Architecture and Lipschitz-control settings.

    layer_sizes runs input -> hidden... -> 1 (scalar regression). lipschitz,
    when set, enables spectral normalization with output scale m = lipschitz.
    """

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    lipschitz: float | None = None
    power_iterations: int = 5
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.layer_sizes[-1] != 1:
            raise ValueError("output layer must have size 1 (scalar regression)")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.lipschitz is not None and not (self.lipschitz > 0.0):
            raise ValueError(f"lipschitz scale must be > 0, got {self.lipschitz}")
        if self.power_iterations < 1:
            raise ValueError("power_iterations must be >= 1")

    @classmethod
    def for_input(cls, input_dim: int, hidden=(10, 20, 30), **kwargs) -> "MlpConfig":
        return cls(layer_sizes=(input_dim, *hidden, 1), **kwargs)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1


@dataclass
class MlpParams:
    """Weights (fan_in x fan_out), biases, and, under Lipschitz control,
    the persistent left/right singular-vector estimates per layer."""

    weights: list
    biases: list
    sn_u: list | None = None
    sn_v: list | None = None

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.sn_u is None else [u.copy() for u in self.sn_u],
            None if self.sn_v is None else [v.copy() for v in self.sn_v],
        )

    def flat(self) -> np.ndarray:
        """Weights and biases concatenated; handy for trajectory comparisons."""
        parts = [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        return np.concatenate(parts)


@dataclass
class Gradients:
    weights: list
    biases: list


def init_params(cfg: MlpConfig) -> MlpParams:
    """He-style uniform fan-in init for ReLU stacks; biases start at zero.

    Under Lipschitz control the power-iteration vectors are seeded here and
    one normalization pass runs immediately so a fresh network already uses
    normalized weights.
    """
    rng = philox_stream(cfg.init_seed, _STREAM_WEIGHTS)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    params = MlpParams(weights, biases)
    if cfg.lipschitz is not None:
        prng = philox_stream(cfg.init_seed, _STREAM_POWER)
        sn_u, sn_v = [], []
        for w in weights:
            u = prng.standard_normal(w.shape[1])
            v = prng.standard_normal(w.shape[0])
            sn_u.append(u / np.linalg.norm(u))
            sn_v.append(v / np.linalg.norm(v))
        params.sn_u, params.sn_v = sn_u, sn_v
        # Warm start: from cold random vectors a handful of iterations can
        # miss the top singular pair on gap-poor matrices; afterwards the
        # persistent estimates track the slowly moving weights with the
        # configured per-step iteration count.
        spectral_normalize(params, cfg, iterations=max(25, cfg.power_iterations))
    return params


def _sigma(w: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """Top-singular-value estimate u.(v@W) for the current vectors, floored
    so a zero matrix yields effective weight 0 rather than a division blowup."""
    return max(float(u @ (v @ w)), _SIGMA_FLOOR)


def spectral_normalize(params: MlpParams, cfg: MlpConfig, iterations: int | None = None) -> MlpParams:
    """Run power iteration on every weight matrix, updating the persistent
    (u, v) estimates in place. Called before each training step; the
    amortized estimates converge quickly because weights move slowly."""
    if cfg.lipschitz is None or params.sn_u is None:
        raise ValueError("spectral_normalize requires a Lipschitz-enabled model")
    iters = cfg.power_iterations if iterations is None else iterations
    for k, w in enumerate(params.weights):
        u = params.sn_u[k]
        v = params.sn_v[k]
        for _ in range(iters):
            wv = w @ u
            nv = np.linalg.norm(wv)
            if nv < _SIGMA_FLOOR:
                break
            v = wv / nv
            uw = v @ w
            nu = np.linalg.norm(uw)
            if nu < _SIGMA_FLOOR:
                break
            u = uw / nu
        params.sn_u[k] = u
        params.sn_v[k] = v
    return params


def finalize_spectral(params: MlpParams, cfg: MlpConfig, iterations: int = 50) -> MlpParams:
    """High-precision normalization pass that folds W <- W / sigma, fixing
    the effective weights for export/evaluation."""
    spectral_normalize(params, cfg, iterations=iterations)
    for k, w in enumerate(params.weights):
        params.weights[k] = w / _sigma(w, params.sn_u[k], params.sn_v[k])
    return params


def _effective_weights(params: MlpParams, cfg: MlpConfig):
    if cfg.lipschitz is None:
        return params.weights, None
    sigmas = [
        _sigma(w, u, v) for w, u, v in zip(params.weights, params.sn_u, params.sn_v)
    ]
    return [w / s for w, s in zip(params.weights, sigmas)], sigmas


def _forward_cache(params: MlpParams, cfg: MlpConfig, X: np.ndarray):
    """Batch forward pass keeping pre-activations for backprop.

    Returns (predictions, hidden activations incl. input, pre-activations,
    effective weights, sigmas)."""
    if X.ndim != 2 or X.shape[1] != cfg.layer_sizes[0]:
        raise ValueError(
            f"input has shape {X.shape}, expected (batch, {cfg.layer_sizes[0]})"
        )
    eff, sigmas = _effective_weights(params, cfg)
    hs = [X]
    zs = []
    h = X
    last = cfg.n_layers - 1
    for k, (w, b) in enumerate(zip(eff, params.biases)):
        z = h @ w + b
        zs.append(z)
        if k < last:
            h = np.maximum(z, 0.0)
            hs.append(h)
    y = zs[-1][:, 0]
    if cfg.lipschitz is not None:
        y = cfg.lipschitz * y
    return y, hs, zs, eff, sigmas


def predict(params: MlpParams, cfg: MlpConfig, X) -> np.ndarray:
    """Predictions for a (batch, input_dim) feature matrix."""
    X = np.asarray(X, dtype=float)
    y, _, _, _, _ = _forward_cache(params, cfg, X)
    return y


def forward(params: MlpParams, cfg: MlpConfig, x) -> float:
    """Prediction for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D feature vector, got shape {x.shape}")
    return float(predict(params, cfg, x[None, :])[0])


def _backward(params: MlpParams, cfg: MlpConfig, hs, zs, eff, sigmas, dLdy) -> Gradients:
    """Reverse pass from per-sample output gradients dLdy (already including
    any 1/batch factor). Gradients are with respect to the raw weights: under
    normalization, sigma = u.(v@W) is differentiated with (u, v) held fixed."""
    n_layers = cfg.n_layers
    dz = dLdy[:, None]
    if cfg.lipschitz is not None:
        dz = dz * cfg.lipschitz
    g_w = [None] * n_layers
    g_b = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        g_eff = hs[k].T @ dz
        g_b[k] = dz.sum(axis=0)
        if sigmas is None:
            g_w[k] = g_eff
        else:
            w = params.weights[k]
            s = sigmas[k]
            g_w[k] = g_eff / s - (np.sum(g_eff * w) / (s * s)) * np.outer(
                params.sn_v[k], params.sn_u[k]
            )
        if k > 0:
            dh = dz @ eff[k].T
            dz = dh * (zs[k - 1] > 0.0)
    return Gradients(g_w, g_b)


# --- per-sample loss specifications -------------------------------------

@dataclass(frozen=True)
class ProjectionTarget:
    """Score the prediction with the projection loss against this interval."""

    interval: Interval


@dataclass(frozen=True)
class WorstcaseTarget:
    """Score the prediction with the worst-case loss against this interval."""

    interval: Interval


@dataclass(frozen=True)
class PointwiseTarget:
    """Score the prediction with the plain loss against this exact value."""

    value: float


@dataclass
class TargetBatch:
    """Vectorized view of per-sample loss specs: interval bounds plus a mask
    for which rows use the worst-case (max) branch rather than projection.
    Pointwise targets are degenerate projection intervals lo == hi, which is
    exactly the plain loss."""

    lo: np.ndarray
    hi: np.ndarray
    is_worst: np.ndarray

    @classmethod
    def projection(cls, lowers, uppers) -> "TargetBatch":
        lo = np.asarray(lowers, dtype=float)
        hi = np.asarray(uppers, dtype=float)
        return cls(lo, hi, np.zeros(lo.shape, dtype=bool))

    @classmethod
    def worstcase(cls, lowers, uppers) -> "TargetBatch":
        lo = np.asarray(lowers, dtype=float)
        hi = np.asarray(uppers, dtype=float)
        return cls(lo, hi, np.ones(lo.shape, dtype=bool))

    @classmethod
    def pointwise(cls, values) -> "TargetBatch":
        t = np.asarray(values, dtype=float)
        return cls(t, t, np.zeros(t.shape, dtype=bool))

    @classmethod
    def from_specs(cls, specs) -> "TargetBatch":
        lo = np.empty(len(specs))
        hi = np.empty(len(specs))
        w = np.zeros(len(specs), dtype=bool)
        for i, spec in enumerate(specs):
            if isinstance(spec, ProjectionTarget):
                lo[i], hi[i] = spec.interval.lower, spec.interval.upper
            elif isinstance(spec, WorstcaseTarget):
                lo[i], hi[i] = spec.interval.lower, spec.interval.upper
                w[i] = True
            elif isinstance(spec, PointwiseTarget):
                lo[i] = hi[i] = spec.value
            else:
                raise TypeError(f"unknown loss spec {spec!r}")
        return cls(lo, hi, w)

    def take(self, idx) -> "TargetBatch":
        return TargetBatch(self.lo[idx], self.hi[idx], self.is_worst[idx])


def _target_values(yhat: np.ndarray, tb: TargetBatch, p: float) -> np.ndarray:
    d_lo = yhat - tb.lo
    d_hi = yhat - tb.hi
    proj = np.where(
        yhat < tb.lo, pow_abs(d_lo, p), np.where(yhat > tb.hi, pow_abs(d_hi, p), 0.0)
    )
    if not tb.is_worst.any():
        return proj
    mid = 0.5 * (tb.lo + tb.hi)
    worst = np.where(yhat <= mid, pow_abs(d_hi, p), pow_abs(d_lo, p))
    return np.where(tb.is_worst, worst, proj)


def _target_grads(yhat: np.ndarray, tb: TargetBatch, p: float) -> np.ndarray:
    d_lo = yhat - tb.lo
    d_hi = yhat - tb.hi
    proj = np.where(
        yhat < tb.lo,
        pow_abs_grad(d_lo, p),
        np.where(yhat > tb.hi, pow_abs_grad(d_hi, p), 0.0),
    )
    if not tb.is_worst.any():
        return proj
    mid = 0.5 * (tb.lo + tb.hi)
    worst = np.where(
        yhat < mid,
        pow_abs_grad(d_hi, p),
        np.where(yhat > mid, pow_abs_grad(d_lo, p), 0.0),
    )
    return np.where(tb.is_worst, worst, proj)


def batch_loss(params: MlpParams, cfg: MlpConfig, X, tb: TargetBatch, p: float) -> float:
    """Mean loss of the batch without gradients."""
    yhat = predict(params, cfg, X)
    return float(np.mean(_target_values(yhat, tb, p)))


def batch_loss_and_grad(
    params: MlpParams, cfg: MlpConfig, X, tb: TargetBatch, p: float
) -> tuple[float, Gradients]:
    """Mean batch loss and its exact gradient for vectorized targets.

    This is the training hot path; loss_and_grad wraps it for target lists.
    """
    X = np.asarray(X, dtype=float)
    yhat, hs, zs, eff, sigmas = _forward_cache(params, cfg, X)
    values = _target_values(yhat, tb, p)
    dLdy = _target_grads(yhat, tb, p) / X.shape[0]
    grads = _backward(params, cfg, hs, zs, eff, sigmas, dLdy)
    return float(np.mean(values)), grads


def loss_and_grad(
    params: MlpParams, cfg: MlpConfig, batch, family: LossFamily
) -> tuple[float, Gradients]:
    """Mean loss over [(x, loss spec), ...] and its gradient w.r.t. all
    parameters. Specs may mix projection/worst-case/pointwise rows."""
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    X = np.stack([np.asarray(x, dtype=float) for x, _ in batch])
    tb = TargetBatch.from_specs([spec for _, spec in batch])
    return batch_loss_and_grad(params, cfg, X, tb, family.exponent)


# --- optimizer -----------------------------------------------------------

@dataclass
class AdamState:
    """Bias-corrected Adam accumulators shaped like the parameters."""

    m_w: list
    m_b: list
    v_w: list
    v_b: list
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 0.001) -> "AdamState":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            lr=lr,
        )


def adam_step(state: AdamState, params: MlpParams, grads: Gradients):
    """One in-place Adam update; deterministic. Returns (state, params)."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t

    def update(m, v, param, g):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon_hat)

    for k in range(len(params.weights)):
        update(state.m_w[k], state.v_w[k], params.weights[k], grads.weights[k])
        update(state.m_b[k], state.v_b[k], params.biases[k], grads.biases[k])
    return state, params


# --- data-driven Lipschitz estimate --------------------------------------

def estimate_lipschitz_constant(
    xs,
    ys,
    percentile: float = 95.0,
    max_pairs: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Percentile of |y_i - y_j| / ||x_i - x_j|| over point pairs.

    All distinct pairs are used when there are at most max_pairs of them;
    beyond that, max_pairs pairs are sampled uniformly (seeded). Pairs at
    zero feature distance are skipped: they carry no slope information. The
    high percentile (default 95) ignores the heavy outlier tail and captures
    the smoothness actually present in the data.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 2 or xs.shape[0] < 2:
        raise ValueError("need a 2-D feature matrix with at least 2 rows")
    if ys.shape != (xs.shape[0],):
        raise ValueError("targets must match feature rows")
    if not (0.0 < percentile <= 100.0):
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    n = xs.shape[0]
    ratios = []
    if n * (n - 1) // 2 <= max_pairs:
        # all pairs, chunked by row to bound memory
        for i in range(n - 1):
            diff = xs[i + 1 :] - xs[i]
            dist = np.sqrt(np.sum(diff * diff, axis=1))
            dy = np.abs(ys[i + 1 :] - ys[i])
            ok = dist > 0.0
            if ok.any():
                ratios.append(dy[ok] / dist[ok])
    else:
        rng = philox_stream(seed, _STREAM_PAIRS)
        ii = rng.integers(0, n, size=max_pairs)
        jj = rng.integers(0, n, size=max_pairs)
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]
        diff = xs[ii] - xs[jj]
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        dy = np.abs(ys[ii] - ys[jj])
        ok = dist > 0.0
        if ok.any():
            ratios.append(dy[ok] / dist[ok])
    if not ratios:
        raise ValueError("all pairs have zero feature distance")
    return float(np.percentile(np.concatenate(ratios), percentile))


# --- checkpointing --------------------------------------------------------

_CKPT_MAGIC = b"intreg-mlp v1\n"


def save_checkpoint(path, params: MlpParams, cfg: MlpConfig) -> None:
    """Flat binary serialization: magic line, JSON header, then raw
    little-endian float64 arrays (row-major) in declared order. Bit-exact."""
    header = {
        "layer_sizes": list(cfg.layer_sizes),
        "activation": cfg.activation,
        "lipschitz": cfg.lipschitz,
        "power_iterations": cfg.power_iterations,
        "init_seed": cfg.init_seed,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)

        def put(a):
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())

        for w, b in zip(params.weights, params.biases):
            put(w)
            put(b)
        if cfg.lipschitz is not None:
            for u, v in zip(params.sn_u, params.sn_v):
                put(u)
                put(v)


def load_checkpoint(path) -> tuple[MlpParams, MlpConfig]:
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not an intreg checkpoint (bad magic)")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        cfg = MlpConfig(
            layer_sizes=tuple(header["layer_sizes"]),
            activation=header["activation"],
            lipschitz=header["lipschitz"],
            power_iterations=header["power_iterations"],
            init_seed=header["init_seed"],
        )

        def take(shape):
            count = int(np.prod(shape))
            data = f.read(count * 8)
            if len(data) != count * 8:
                raise ValueError(f"{path}: truncated checkpoint")
            return np.frombuffer(data, dtype="<f8").astype(float).reshape(shape)

        weights, biases = [], []
        for fan_in, fan_out in zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:]):
            weights.append(take((fan_in, fan_out)))
            biases.append(take((fan_out,)))
        params = MlpParams(weights, biases)
        if cfg.lipschitz is not None:
            sn_u, sn_v = [], []
            for fan_in, fan_out in zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:]):
                sn_u.append(take((fan_out,)))
                sn_v.append(take((fan_in,)))
            params.sn_u, params.sn_v = sn_u, sn_v
    return params, cfg
