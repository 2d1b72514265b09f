"""Gradient-ascent updates on action sequences (or any parameter array)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = ["OptimizerState", "apply_update", "make_optimizer"]


@dataclass(frozen=True)
class OptimizerState:
    kind: str = "adam"
    eta: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step: int = 0

    def __post_init__(self):
        if self.kind not in ("adam", "plain"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")


def make_optimizer(kind="adam", eta=1e-3, **kwargs):
    return OptimizerState(kind=kind, eta=eta, **kwargs)


def apply_update(state, params, g):
    """One ascent step ``params + eta * direction(g)``.

    Returns ``(new_state, new_params)``; inputs are not modified.  Weight
    decay, when set, is decoupled: ``params <- params - eta * wd * params``.
    """
    params = np.asarray(params, dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape != params.shape:
        raise ValueError(f"gradient shape {g.shape} does not match parameters {params.shape}")
    if not np.all(np.isfinite(g)):
        bad = np.argwhere(~np.isfinite(g))[0]
        raise FloatingPointError(f"non-finite gradient at t={int(bad[0])}")
    step = state.step + 1
    new = params
    if state.weight_decay:
        new = new - state.eta * state.weight_decay * params
    if state.kind == "plain":
        return replace(state, step=step), new + state.eta * g
    m = np.zeros_like(params) if state.m is None else state.m
    v = np.zeros_like(params) if state.v is None else state.v
    m = state.beta1 * m + (1.0 - state.beta1) * g
    v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new = new + state.eta * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=step), new
