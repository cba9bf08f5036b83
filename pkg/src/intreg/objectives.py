"""Training objectives for interval-target regression.

Eight objective kinds share one minibatch Adam loop:

  projection           projection loss against each interval
  minmax               worst-case loss against each interval
  minmax_reg           gradient descent-ascent against an adversary network
                       rewarded for staying inside the intervals
  pl_max / pl_mean     student distilled from frozen projection-trained
                       teachers; per-step max / mean over teacher losses
  pl_ensemble          student trained on the averaged teacher label
  supervised_midpoint  plain loss against interval midpoints
  supervised_true      plain loss against the hidden exact targets
                       (synthetic data only; the oracle baseline)

Training is a deterministic function of (spec, config, dataset): shuffles,
inits, teachers, and the adversary all draw from Philox streams derived from
the run seed. No early stopping; the epoch count is fixed up front.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Interval, IntervalDataset, LossFamily, pow_abs, pow_abs_grad
from .intervalgen import philox_stream
from .model import (
    AdamState,
    MlpConfig,
    MlpParams,
    TargetBatch,
    adam_step,
    batch_loss_and_grad,
    finalize_spectral,
    init_params,
    predict,
    spectral_normalize,
    _backward,
    _forward_cache,
)

__all__ = [
    "OBJECTIVE_KINDS",
    "ObjectiveSpec",
    "TrainConfig",
    "TrainedModel",
    "train",
    "make_pseudo_labels",
    "pl_mean_loss_and_grad",
    "pl_max_loss_and_grad",
    "adversary_loss_and_grad",
    "constant_class_minmax_fixture",
]

OBJECTIVE_KINDS = (
    "projection",
    "minmax",
    "minmax_reg",
    "pl_max",
    "pl_mean",
    "pl_ensemble",
    "supervised_midpoint",
    "supervised_true",
)

_PL_KINDS = ("pl_max", "pl_mean", "pl_ensemble")

_STREAM_SHUFFLE = 20
# Adversary init lives far from any teacher seed offset (teachers use +1..+k).
_ADVERSARY_SEED_OFFSET = 2 ** 32


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    loss_exponent: float = 1.0
    reg_lambda: float = 1.0
    adversary_lr: float | None = None
    teachers: int = 5

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective {self.kind!r}; expected one of {OBJECTIVE_KINDS}")
        LossFamily(self.loss_exponent)  # range check
        if self.kind == "minmax_reg" and not (self.reg_lambda > 0.0):
            raise ValueError(f"reg_lambda must be > 0, got {self.reg_lambda}")
        if self.adversary_lr is not None and not (self.adversary_lr > 0.0):
            raise ValueError(f"adversary_lr must be > 0, got {self.adversary_lr}")
        if self.kind in _PL_KINDS and self.teachers < 1:
            raise ValueError(f"need at least 1 teacher, got {self.teachers}")


@dataclass(frozen=True)
class TrainConfig:
    model: MlpConfig
    epochs: int = 1000
    batch_size: int = 512
    lr: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not (self.lr > 0.0):
            raise ValueError(f"lr must be > 0, got {self.lr}")


@dataclass
class TrainedModel:
    """Frozen result of one training run: parameters, config snapshot, the
    objective, and the per-epoch training-loss trace."""

    params: MlpParams
    model_config: MlpConfig
    objective: ObjectiveSpec
    trace: np.ndarray
    mae_trace: np.ndarray | None = None

    def predict(self, X) -> np.ndarray:
        return predict(self.params, self.model_config, X)


def make_pseudo_labels(teachers, xs) -> np.ndarray:
    """(k, n) matrix of frozen teacher predictions; row j is teacher j."""
    if len(teachers) == 0:
        raise ValueError("need at least one teacher")
    xs = np.asarray(xs, dtype=float)
    return np.stack([t.predict(xs) for t in teachers])


def _batches(perm: np.ndarray, batch_size: int):
    for a in range(0, perm.shape[0], batch_size):
        yield perm[a : a + batch_size]


def train(
    spec: ObjectiveSpec,
    tc: TrainConfig,
    ds: IntervalDataset,
    teachers: list[TrainedModel] | None = None,
    epoch_callback=None,
    record_train_mae: bool = False,
) -> TrainedModel:
    """Minibatch Adam over shuffled epochs minimizing spec's loss on ds.

    Pseudo-label objectives first train spec.teachers projection teachers
    from seeds (seed+1 .. seed+k) — both the run seed and the init seed are
    shifted so teachers differ in initialization — then freeze them and
    train the student; pass teachers= to reuse existing ones. minmax_reg
    alternates one Adam ascent step of an independently initialized
    adversary with one descent step of the learner per batch.

    The trace records the epoch mean of batch losses, except pl_max which
    logs the full-dataset max-over-teachers loss once per epoch (the
    per-step max over minibatch means is a stochastic surrogate for the
    epoch-level max). epoch_callback(epoch, params), when given, observes
    live parameters after each epoch.
    """
    p = spec.loss_exponent
    X = ds.features
    n = len(ds)

    if spec.kind == "supervised_true" and ds.true_ys is None:
        raise ValueError("supervised_true requires true_y on every sample")

    labels = None
    if spec.kind in _PL_KINDS:
        if teachers is None:
            teachers = _train_teachers(spec, tc, ds)
        labels = make_pseudo_labels(teachers, X)

    full_tb = _build_targets(spec, ds, labels)

    params = init_params(tc.model)
    opt = AdamState.for_params(params, lr=tc.lr)
    lipschitz = tc.model.lipschitz is not None

    adv_params = adv_opt = None
    if spec.kind == "minmax_reg":
        adv_cfg = replace(tc.model, init_seed=tc.model.init_seed + _ADVERSARY_SEED_OFFSET)
        adv_params = init_params(adv_cfg)
        adv_opt = AdamState.for_params(adv_params, lr=spec.adversary_lr or tc.lr)

    shuffle_rng = philox_stream(tc.seed, _STREAM_SHUFFLE)
    trace = np.zeros(tc.epochs)
    mae_trace = np.zeros(tc.epochs) if record_train_mae else None
    if record_train_mae and ds.true_ys is None:
        raise ValueError("record_train_mae requires true_y on every sample")

    for epoch in range(tc.epochs):
        perm = shuffle_rng.permutation(n)
        losses = []
        for idx in _batches(perm, tc.batch_size):
            xb = X[idx]
            if spec.kind == "minmax_reg":
                loss = _minmax_reg_step(
                    spec, tc, params, opt, adv_params, adv_opt, xb, ds, idx, p
                )
            elif spec.kind == "pl_max":
                loss = _pl_max_step(tc, params, opt, xb, labels[:, idx], p)
            elif spec.kind == "pl_mean":
                loss = _pl_mean_step(tc, params, opt, xb, labels[:, idx], p)
            else:
                if lipschitz:
                    spectral_normalize(params, tc.model)
                loss, grads = batch_loss_and_grad(params, tc.model, xb, full_tb.take(idx), p)
                adam_step(opt, params, grads)
            losses.append(loss)

        if spec.kind == "pl_max":
            yhat = predict(params, tc.model, X)
            trace[epoch] = max(
                float(np.mean(pow_abs(yhat - labels[j], p))) for j in range(labels.shape[0])
            )
        else:
            trace[epoch] = float(np.mean(losses))
        if record_train_mae:
            mae_trace[epoch] = float(np.mean(np.abs(predict(params, tc.model, X) - ds.true_ys)))
        if epoch_callback is not None:
            epoch_callback(epoch, params)

    if lipschitz:
        finalize_spectral(params, tc.model)
    return TrainedModel(params, tc.model, spec, trace, mae_trace)


def _build_targets(spec: ObjectiveSpec, ds: IntervalDataset, labels) -> TargetBatch | None:
    if spec.kind == "projection":
        return TargetBatch.projection(ds.lowers, ds.uppers)
    if spec.kind == "minmax":
        return TargetBatch.worstcase(ds.lowers, ds.uppers)
    if spec.kind == "supervised_midpoint":
        return TargetBatch.pointwise(0.5 * (ds.lowers + ds.uppers))
    if spec.kind == "supervised_true":
        return TargetBatch.pointwise(ds.true_ys)
    if spec.kind == "pl_ensemble":
        return TargetBatch.pointwise(labels.mean(axis=0))
    return None  # minmax_reg / pl_max / pl_mean build per-batch targets


def _train_teachers(spec: ObjectiveSpec, tc: TrainConfig, ds: IntervalDataset):
    teacher_spec = ObjectiveSpec(kind="projection", loss_exponent=spec.loss_exponent)
    out = []
    for j in range(1, spec.teachers + 1):
        teacher_tc = replace(
            tc,
            seed=tc.seed + j,
            model=replace(tc.model, init_seed=tc.model.init_seed + j),
        )
        out.append(train(teacher_spec, teacher_tc, ds))
    return out


def pl_mean_loss_and_grad(params: MlpParams, cfg: MlpConfig, xb, labels, p: float):
    """Mean-over-teachers pointwise batch loss and its gradient."""
    yhat, hs, zs, eff, sigmas = _forward_cache(params, cfg, xb)
    diff = yhat[None, :] - labels
    loss = float(np.mean(pow_abs(diff, p)))
    dLdy = pow_abs_grad(diff, p).mean(axis=0) / xb.shape[0]
    return loss, _backward(params, cfg, hs, zs, eff, sigmas, dLdy)


def pl_max_loss_and_grad(params: MlpParams, cfg: MlpConfig, xb, labels, p: float):
    """Loss of the worst teacher on this batch and the subgradient through
    that teacher (the max's active branch)."""
    yhat, hs, zs, eff, sigmas = _forward_cache(params, cfg, xb)
    per_teacher = pow_abs(yhat[None, :] - labels, p).mean(axis=1)
    j = int(np.argmax(per_teacher))
    dLdy = pow_abs_grad(yhat - labels[j], p) / xb.shape[0]
    return float(per_teacher[j]), _backward(params, cfg, hs, zs, eff, sigmas, dLdy)


def adversary_loss_and_grad(
    adv_params: MlpParams, cfg: MlpConfig, xb, learner_pred, lowers, uppers,
    reg_lambda: float, p: float,
):
    """Ascent objective J = mean loss(learner, f') - lambda * mean
    projection(f', interval), and the gradients of -J (so a standard
    minimizing optimizer performs the ascent). The regularizer is always
    nonpositive in J, pulling f' toward hypotheses inside the intervals.
    """
    y_adv, hs, zs, eff, sigmas = _forward_cache(adv_params, cfg, xb)
    proj_vals = np.where(
        y_adv < lowers,
        pow_abs(y_adv - lowers, p),
        np.where(y_adv > uppers, pow_abs(y_adv - uppers, p), 0.0),
    )
    proj_grad = np.where(
        y_adv < lowers,
        pow_abs_grad(y_adv - lowers, p),
        np.where(y_adv > uppers, pow_abs_grad(y_adv - uppers, p), 0.0),
    )
    J = float(np.mean(pow_abs(y_adv - learner_pred, p)) - reg_lambda * np.mean(proj_vals))
    dJ = pow_abs_grad(y_adv - learner_pred, p) - reg_lambda * proj_grad
    grads = _backward(adv_params, cfg, hs, zs, eff, sigmas, -dJ / xb.shape[0])
    return J, grads


def _pl_mean_step(tc, params, opt, xb, labels, p) -> float:
    if tc.model.lipschitz is not None:
        spectral_normalize(params, tc.model)
    loss, grads = pl_mean_loss_and_grad(params, tc.model, xb, labels, p)
    adam_step(opt, params, grads)
    return loss


def _pl_max_step(tc, params, opt, xb, labels, p) -> float:
    if tc.model.lipschitz is not None:
        spectral_normalize(params, tc.model)
    loss, grads = pl_max_loss_and_grad(params, tc.model, xb, labels, p)
    adam_step(opt, params, grads)
    return loss


def _minmax_reg_step(spec, tc, params, opt, adv_params, adv_opt, xb, ds, idx, p) -> float:
    """One adversary ascent step, then one learner descent step."""
    cfg = tc.model
    lipschitz = cfg.lipschitz is not None

    if lipschitz:
        spectral_normalize(params, cfg)
    y_learner = predict(params, cfg, xb)

    if lipschitz:
        spectral_normalize(adv_params, cfg)
    _, adv_grads = adversary_loss_and_grad(
        adv_params, cfg, xb, y_learner, ds.lowers[idx], ds.uppers[idx], spec.reg_lambda, p
    )
    adam_step(adv_opt, adv_params, adv_grads)

    if lipschitz:
        spectral_normalize(adv_params, cfg)
    target = predict(adv_params, cfg, xb)
    loss, grads = batch_loss_and_grad(params, cfg, xb, TargetBatch.pointwise(target), p)
    adam_step(opt, params, grads)
    return loss


def constant_class_minmax_fixture(a: float, epsilon: float):
    """Closed-form analysis of the two-point construction that separates
    hypothesis-constrained minmax from label-level minmax.

    Two inputs carry intervals [-a, eps] and [-eps, 2*eps] around the true
    constant target 0; hypotheses are constants. Constants lying inside both
    intervals form [-eps, eps], so the hypothesis-constrained minmax
    (inner max over that set) is uniquely minimized at 0 with zero error.
    The label-level worst-case objective is flat between the two interval
    midpoints, so any constant in [(-a+eps)/2, eps/2] minimizes it; the
    worst such tie errs by max((a-eps)/2, eps/2), which grows with a.

    Returns (f1_value, f1_error, label_minmax_minimizer_set, worst_tie_error).
    """
    if not (a > epsilon > 0.0):
        raise ValueError(f"need a > epsilon > 0, got a={a}, epsilon={epsilon}")
    # inner max over c' in [-eps, eps] of |d - c'| = |d| + eps, minimized at d = 0
    f1_value = 0.0
    f1_error = 0.0
    lo = 0.5 * (-a + epsilon)
    hi = 0.5 * epsilon
    minimizer_set = Interval(lo, hi)
    worst_tie_error = max(abs(lo), abs(hi))
    return f1_value, f1_error, minimizer_set, worst_tie_error
