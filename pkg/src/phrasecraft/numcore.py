"""Deterministic numeric primitives shared by every training path.

All trainable-parameter updates in the toolkit go through
:func:`adam_step`, which keeps the determinism contract (same seed, same
data order, bitwise-identical parameters) easy to audit. An invocation
counter backs that audit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, NumericError

# Exponential-decay rates and stabilizer; standard Adam defaults.
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_adam_invocations = 0


def adam_invocations() -> int:
    """Total adam_step calls in this process (update-bookkeeping audit)."""
    return _adam_invocations


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the only sanctioned randomness source."""
    return np.random.default_rng(int(seed))


@dataclass
class OptimState:
    """Adam moment estimates for one flat parameter vector."""

    step: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps_stab: float = ADAM_EPS

    def __post_init__(self):
        if self.step < 0:
            raise InvalidArgumentError(f"optimizer step must be >= 0, got {self.step}")
        if self.first_moment.shape != self.second_moment.shape:
            raise InvalidArgumentError(
                "moment vectors differ in length: "
                f"{self.first_moment.shape} vs {self.second_moment.shape}"
            )

    @classmethod
    def fresh(cls, n_params: int) -> "OptimState":
        return cls(
            step=0,
            first_moment=np.zeros(n_params, dtype=np.float64),
            second_moment=np.zeros(n_params, dtype=np.float64),
        )


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for contrastive fine-tuning and the MLP head."""

    base_lr: float = 2e-5
    batch_size: int = 16
    epochs: int = 1
    warmup_fraction: float = 0.10
    margin: float = 1.0
    seed: int = 0
    lr_hold: bool = False  # constant lr after warmup instead of linear decay

    def __post_init__(self):
        if self.base_lr <= 0:
            raise InvalidArgumentError(f"base_lr must be > 0, got {self.base_lr}")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise InvalidArgumentError(
                f"warmup_fraction must lie in [0, 1], got {self.warmup_fraction}"
            )
        if self.margin < 0:
            raise InvalidArgumentError(f"margin must be >= 0, got {self.margin}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise InvalidArgumentError(f"epochs must be >= 0, got {self.epochs}")


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: OptimState,
    lr: float,
) -> tuple[np.ndarray, OptimState]:
    """One Adam update with bias correction; returns new params and state.

    Entries whose gradient is exactly zero are left completely untouched
    (parameter and both moments), so sparse gradient records -- e.g. token
    rows absent from a batch -- never drift. For nonzero gradients this is
    the textbook recurrence.
    """
    global _adam_invocations
    if params.shape != grads.shape:
        raise InvalidArgumentError(
            f"params/grads length mismatch: {params.shape} vs {grads.shape}"
        )
    if params.shape != state.first_moment.shape:
        raise InvalidArgumentError(
            f"params/moments length mismatch: {params.shape} vs {state.first_moment.shape}"
        )
    if lr <= 0:
        raise InvalidArgumentError(f"learning rate must be > 0, got {lr}")

    _adam_invocations += 1
    step = state.step + 1
    live = grads != 0.0

    m = state.first_moment.copy()
    v = state.second_moment.copy()
    g = grads[live]
    m[live] = state.beta1 * m[live] + (1.0 - state.beta1) * g
    v[live] = state.beta2 * v[live] + (1.0 - state.beta2) * g * g

    m_hat = m[live] / (1.0 - state.beta1**step)
    v_hat = v[live] / (1.0 - state.beta2**step)

    new_params = params.copy()
    new_params[live] = params[live] - lr * m_hat / (np.sqrt(v_hat) + state.eps_stab)

    new_state = OptimState(
        step=step,
        first_moment=m,
        second_moment=v,
        beta1=state.beta1,
        beta2=state.beta2,
        eps_stab=state.eps_stab,
    )
    return new_params, new_state


def warmup_steps(total_steps: int, cfg: TrainConfig) -> int:
    return math.ceil(cfg.warmup_fraction * total_steps)


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Learning rate at a global step: linear warmup, then linear decay.

    Ramps 0 -> base_lr over the first ceil(warmup_fraction * total) steps
    and decays linearly back to 0 at total_steps. With ``cfg.lr_hold`` the
    post-warmup value stays at base_lr.
    """
    if total_steps <= 0:
        raise InvalidArgumentError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step < total_steps:
        raise InvalidArgumentError(
            f"step {step} outside training range [0, {total_steps})"
        )
    w = warmup_steps(total_steps, cfg)
    if step < w:
        return cfg.base_lr * step / w
    if cfg.lr_hold:
        return cfg.base_lr
    decay_span = total_steps - w
    if decay_span <= 0:
        return cfg.base_lr
    return cfg.base_lr * (total_steps - step) / decay_span


def finite_diff_check(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between `analytic` and central differences.

    Relative error per coordinate uses max(|analytic|, |numeric|, 1e-8) as
    denominator. `loss_fn` must be pure and finite near `params`.
    """
    if h <= 0:
        raise InvalidArgumentError(f"step size h must be > 0, got {h}")
    if params.shape != analytic.shape:
        raise InvalidArgumentError(
            f"params/analytic length mismatch: {params.shape} vs {analytic.shape}"
        )
    worst = 0.0
    base = params.astype(np.float64, copy=True)
    for i in range(base.size):
        bump = np.zeros_like(base)
        bump.flat[i] = h
        f_plus = float(loss_fn(base + bump))
        f_minus = float(loss_fn(base - bump))
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NumericError(
                f"loss non-finite while probing coordinate {i}: "
                f"f(+h)={f_plus}, f(-h)={f_minus}"
            )
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic.flat[i])
        denom = max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, abs(a - numeric) / denom)
    return worst
