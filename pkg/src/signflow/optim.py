"""Adamax: the infinity-norm variant of Adam used to train the classifier.

Per step, elementwise over every parameter tensor:

    t <- t + 1
    m <- beta1 * m + (1 - beta1) * g
    u <- max(beta2 * u, |g|)
    theta <- theta - (lr / (1 - beta1^t)) * m / (u + eps)

eps sits in the denominator (not folded into u); tests hand-compute
updates against exactly this placement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UpdateError(ValueError):
    """Gradient/state mismatch or a non-finite gradient."""


@dataclass(frozen=True)
class AdamaxHyper:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must be in [0, 1), got {self.beta2}")
        if self.eps <= 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")


@dataclass
class AdamaxState:
    """Per-tensor first-moment and infinity-norm accumulators plus step count."""

    m: list
    u: list
    t: int = 0


def init_state(params) -> AdamaxState:
    """Fresh all-zero state matching a list of parameter tensors."""
    return AdamaxState(
        m=[np.zeros_like(p, dtype=np.float64) for p in params],
        u=[np.zeros_like(p, dtype=np.float64) for p in params],
        t=0,
    )


def adamax_step(params, grads, state: AdamaxState, hyper: AdamaxHyper, names=None):
    """Apply one Adamax update; returns (new params, new state).

    Inputs are left untouched; callers own the returned state.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise UpdateError(
            f"got {len(params)} params, {len(grads)} grads, {len(state.m)} state tensors"
        )
    t = state.t + 1
    scale = hyper.lr / (1.0 - hyper.beta1 ** t)
    new_params, new_m, new_u = [], [], []
    for i, (theta, g) in enumerate(zip(params, grads)):
        name = names[i] if names else f"tensor {i}"
        if theta.shape != g.shape:
            raise UpdateError(f"{name}: param shape {theta.shape} != grad shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise UpdateError(f"{name}: non-finite gradient")
        m = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g
        u = np.maximum(hyper.beta2 * state.u[i], np.abs(g))
        new_params.append(theta - scale * m / (u + hyper.eps))
        new_m.append(m)
        new_u.append(u)
    return new_params, AdamaxState(m=new_m, u=new_u, t=t)
