"""Additive parameter decomposition w = sigma + gamma and its constrained SGD update.

Both halves see the same data gradient (dw/dsigma = dw/dgamma = I). They differ
only through their penalties:

* sigma is pulled back toward its value at the start of the epoch with weight
  beta1(t) = c1 * t (grows over training), via the unsquared distance
  ||sigma - sigma_{t-1}||;
* gamma is pulled toward zero with weight beta2(t) (shrinks over training), via
  the unsquared norm ||gamma||.

Both norms are taken over the whole flattened parameter vector. At the norm's
kink (distance <= eps) the zero subgradient is used.

Because each half receives the full data gradient, one step moves w by twice the
learning rate times the data gradient compared with plain SGD. This follows the
update rule literally; no compensation is applied.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError, DimensionError, ScheduleError
from .mlp import ParamSet
from .tensor import l2_norm

MODES = ("standard", "pd-only", "gamma-only", "full")
BETA2_FAMILIES = ("power", "constant", "linear", "exponential", "step")


@dataclass(frozen=True)
class ScheduleSpec:
    """Epoch-indexed penalty weights. beta1 is always linear (c1 * t)."""

    c1: float = 1e-4
    beta2_family: str = "power"
    c2: float = 0.6
    constant_level: float = 1.0
    linear_start: float = 1.0
    linear_end: float = 0.0
    linear_epochs: int = 100  # epochs to go from start to end, then held
    exp_start: float = 1.0
    exp_decay: float = 0.3  # multiplier per epoch
    step_start: float = 1.0
    step_factor: float = 0.1
    step_interval: int = 2

    def __post_init__(self):
        if self.beta2_family not in BETA2_FAMILIES:
            raise ConfigError(
                f"unknown beta2 family {self.beta2_family!r}; expected one of {BETA2_FAMILIES}"
            )
        if self.c1 < 0 or self.c2 < 0:
            raise ConfigError("c1 and c2 must be nonnegative")
        if self.constant_level < 0 or self.linear_end < 0 or self.exp_start < 0 or self.step_start < 0:
            raise ConfigError("schedule levels must be nonnegative")
        if self.linear_start < self.linear_end:
            raise ConfigError("linear beta2 must not increase (linear_start < linear_end)")
        if self.linear_epochs < 1 or self.step_interval < 1:
            raise ConfigError("linear_epochs and step_interval must be >= 1")
        if not (0 < self.exp_decay <= 1) or not (0 < self.step_factor <= 1):
            raise ConfigError("exp_decay and step_factor must lie in (0, 1]")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-3
    lr_decay_epochs: Tuple[int, ...] = ()
    lr_decay_factor: float = 0.1
    norm_epsilon: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")
        if any(b <= a for a, b in zip(self.lr_decay_epochs, self.lr_decay_epochs[1:])):
            raise ConfigError("lr_decay_epochs must be strictly increasing")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigError("lr_decay_factor must lie in (0, 1]")
        if self.norm_epsilon <= 0:
            raise ConfigError("norm_epsilon must be positive")

    def lr_at(self, t):
        """Step decay: the factor applies once per milestone epoch already completed."""
        drops = sum(1 for e in self.lr_decay_epochs if t > e)
        return self.learning_rate * self.lr_decay_factor ** drops


def _check_epoch(t):
    if t < 1 or int(t) != t:
        raise ScheduleError(f"schedules are defined for integer epochs t >= 1, got {t}")


def beta1(t, spec: ScheduleSpec) -> float:
    _check_epoch(t)
    return spec.c1 * t


def beta2(t, spec: ScheduleSpec) -> float:
    _check_epoch(t)
    fam = spec.beta2_family
    if fam == "power":
        return float(t) ** (-spec.c2)
    if fam == "constant":
        return spec.constant_level
    if fam == "linear":
        frac = min(t - 1, spec.linear_epochs) / spec.linear_epochs
        return spec.linear_start + (spec.linear_end - spec.linear_start) * frac
    if fam == "exponential":
        return spec.exp_start * spec.exp_decay ** (t - 1)
    return spec.step_start * spec.step_factor ** ((t - 1) // spec.step_interval)


def check_mode(mode):
    if mode not in MODES:
        raise ConfigError(f"unknown ablation mode {mode!r}; expected one of {MODES}")
    return mode


def mode_betas(t, spec: ScheduleSpec, mode) -> Tuple[float, float]:
    """The (beta1, beta2) pair actually applied in a given ablation mode."""
    check_mode(mode)
    b1 = beta1(t, spec) if mode == "full" else 0.0
    b2 = beta2(t, spec) if mode in ("gamma-only", "full") else 0.0
    return b1, b2


def eval_params_for(mode):
    """Unconstrained modes predict with w; constrained modes predict with sigma."""
    return "sigma" if check_mode(mode) in ("gamma-only", "full") else "full"


@dataclass
class DecomposedParams:
    sigma: ParamSet
    gamma: ParamSet
    sigma_snapshot: ParamSet
    vel_sigma: ParamSet
    vel_gamma: ParamSet

    def __post_init__(self):
        ref = self.sigma.shapes()
        for name in ("gamma", "sigma_snapshot", "vel_sigma", "vel_gamma"):
            if getattr(self, name).shapes() != ref:
                raise DimensionError(f"{name} shapes {getattr(self, name).shapes()} differ from sigma {ref}")

    def clone(self):
        return DecomposedParams(*(p.clone() for p in (
            self.sigma, self.gamma, self.sigma_snapshot, self.vel_sigma, self.vel_gamma)))


def decompose(w_init: ParamSet, gamma_init="zeros", scale=0.0, rng=None) -> DecomposedParams:
    """Split w_init into sigma + gamma.

    ``gamma_init`` is "zeros" or "random"; the random mode draws gamma i.i.d.
    normal with standard deviation ``scale`` and sets sigma = w_init - gamma.
    """
    if gamma_init == "zeros":
        gamma = w_init.zeros_like()
    elif gamma_init == "random":
        if scale < 0:
            raise ConfigError(f"gamma init scale must be nonnegative, got {scale}")
        if rng is None:
            raise ConfigError("random gamma init needs an rng")
        gamma = ParamSet(
            [(rng.normal(0.0, scale, w.shape), rng.normal(0.0, scale, b.shape)) for w, b in w_init.layers],
            w_init.activation,
        )
    else:
        raise ConfigError(f"unknown gamma init mode {gamma_init!r}")
    sigma = w_init - gamma
    return DecomposedParams(sigma, gamma, sigma.clone(), w_init.zeros_like(), w_init.zeros_like())


def effective_params(dp: DecomposedParams) -> ParamSet:
    return dp.sigma + dp.gamma


def snapshot_epoch(dp: DecomposedParams) -> DecomposedParams:
    dp.sigma_snapshot = dp.sigma.clone()
    return dp


def _unit_scaled(v: ParamSet, weight, eps) -> Optional[ParamSet]:
    r = l2_norm(*v.arrays())
    if r <= eps:
        return None
    return v.scale(weight / r)


def reg_grad_sigma(dp: DecomposedParams, beta1_value, eps=1e-12) -> ParamSet:
    """Gradient of beta1 * ||sigma - sigma_snapshot|| w.r.t. sigma."""
    g = _unit_scaled(dp.sigma - dp.sigma_snapshot, beta1_value, eps)
    return dp.sigma.zeros_like() if g is None else g


def reg_grad_gamma(dp: DecomposedParams, beta2_value, eps=1e-12) -> ParamSet:
    """Gradient of beta2 * ||gamma|| w.r.t. gamma."""
    g = _unit_scaled(dp.gamma, beta2_value, eps)
    return dp.gamma.zeros_like() if g is None else g


def total_gradients(dp: DecomposedParams, data_grad: ParamSet, betas, weight_decay, eps, mode="full"):
    """Full-objective gradients (grad_sigma, grad_gamma); grad_gamma is None in standard mode.

    Objective: L(sigma + gamma) + beta1 ||sigma - sigma_snap|| + beta2 ||gamma||
               + weight_decay/2 (||sigma||^2 + ||gamma||^2).
    """
    if data_grad.shapes() != dp.sigma.shapes():
        raise DimensionError(f"gradient shapes {data_grad.shapes()} differ from parameters {dp.sigma.shapes()}")
    b1, b2 = betas

    def one(param, reg_fn, beta):
        reg = reg_fn(dp, beta, eps) if beta > 0 else None
        out = []
        for i, ((gw, gb), (pw, pb)) in enumerate(zip(data_grad.layers, param.layers)):
            if reg is None:
                out.append((gw + weight_decay * pw, gb + weight_decay * pb))
            else:
                rw, rb = reg.layers[i]
                out.append((gw + rw + weight_decay * pw, gb + rb + weight_decay * pb))
        return ParamSet(out, param.activation)

    grad_sigma = one(dp.sigma, reg_grad_sigma, b1)
    grad_gamma = None if mode == "standard" else one(dp.gamma, reg_grad_gamma, b2)
    return grad_sigma, grad_gamma


def _momentum_update(param: ParamSet, vel: ParamSet, grad: ParamSet, lr, momentum):
    new_p, new_v = [], []
    for (pw, pb), (vw, vb), (gw, gb) in zip(param.layers, vel.layers, grad.layers):
        vw = momentum * vw + gw
        vb = momentum * vb + gb
        new_v.append((vw, vb))
        new_p.append((pw - lr * vw, pb - lr * vb))
    return ParamSet(new_p, param.activation), ParamSet(new_v, param.activation)


def step(dp: DecomposedParams, data_grad: ParamSet, t, cfg: OptimizerConfig, sched: ScheduleSpec,
         mode="full", betas=None) -> DecomposedParams:
    """One mini-batch update of sigma and gamma (in place; also returned).

    ``data_grad`` is the loss gradient at w = sigma + gamma. ``betas`` may carry the
    epoch's precomputed (beta1, beta2); otherwise they are derived from ``t``.
    In standard mode gamma stays frozen and sigma follows plain SGD with momentum.
    """
    check_mode(mode)
    if betas is None:
        betas = mode_betas(t, sched, mode)
    lr = cfg.lr_at(t)
    grad_sigma, grad_gamma = total_gradients(dp, data_grad, betas, cfg.weight_decay, cfg.norm_epsilon, mode)
    dp.sigma, dp.vel_sigma = _momentum_update(dp.sigma, dp.vel_sigma, grad_sigma, lr, cfg.momentum)
    if grad_gamma is not None:
        dp.gamma, dp.vel_gamma = _momentum_update(dp.gamma, dp.vel_gamma, grad_gamma, lr, cfg.momentum)
    return dp


def objective(dp: DecomposedParams, loss_fn, betas, weight_decay) -> float:
    """Scalar objective whose gradient ``total_gradients`` returns (away from the kinks).

    ``loss_fn`` maps the effective ParamSet to the mean data loss.
    """
    b1, b2 = betas
    val = loss_fn(effective_params(dp))
    val += b1 * l2_norm(*(dp.sigma - dp.sigma_snapshot).arrays())
    val += b2 * l2_norm(*dp.gamma.arrays())
    val += 0.5 * weight_decay * (
        sum(float(np.sum(a * a)) for a in dp.sigma.arrays())
        + sum(float(np.sum(a * a)) for a in dp.gamma.arrays())
    )
    return val
