"""l_p norms, their duals, and the derivatives needed by the robust objectives.

All array functions act on the last axis.  ``p = np.inf`` denotes the max norm.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "dual_order",
    "lp_norm",
    "norm_gradient",
    "norm_hessian_diag",
    "dual_norm_value",
    "dual_norm_maximizer",
]


def _check_order(p: float) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"norm order must be >= 1, got {p}")
    return p


def dual_order(p: float) -> float:
    """``q`` with ``1/p + 1/q = 1``."""
    p = _check_order(p)
    if p == 1.0:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def lp_norm(v, q: float) -> np.ndarray:
    q = _check_order(q)
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if q == 1.0:
        return a.sum(axis=-1)
    if q == 2.0:
        return np.sqrt((v * v).sum(axis=-1))
    if np.isinf(q):
        return a.max(axis=-1, initial=0.0)
    # rescale by the max to avoid overflow in |v|**q for large q
    m = a.max(axis=-1, keepdims=True, initial=0.0)
    safe = np.where(m > 0, m, 1.0)
    return np.squeeze(m, -1) * ((a / safe) ** q).sum(axis=-1) ** (1.0 / q)


def norm_gradient(v, q: float) -> np.ndarray:
    """A subgradient of ``||v||_q``; the zero vector is used at ``v = 0``.

    For ``q = inf`` the subgradient picks the first coordinate of maximal
    magnitude; for ``q = 1`` zero coordinates get slope 0.
    """
    q = _check_order(q)
    v = np.asarray(v, dtype=float)
    if q == 1.0:
        return np.sign(v)
    a = np.abs(v)
    if np.isinf(q):
        g = np.zeros_like(v)
        k = np.argmax(a, axis=-1)
        idx = np.indices(k.shape)
        vk = v[(*idx, k)]
        g[(*idx, k)] = np.sign(vk)
        return g
    nrm = lp_norm(v, q)[..., None]
    safe = np.where(nrm > 0, nrm, 1.0)
    g = np.sign(v) * (a / safe) ** (q - 1.0)
    return np.where(nrm > 0, g, 0.0)


def norm_hessian_diag(v, q: float) -> np.ndarray:
    """Diagonal of the Hessian of ``||v||_q`` where it exists.

    Zero for ``q in {1, inf}`` away from kinks.  Callers must ensure ``v`` is
    away from the nondifferentiable set (``v = 0``, and zero coordinates when
    ``q < 2``).
    """
    q = _check_order(q)
    v = np.asarray(v, dtype=float)
    if q == 1.0 or np.isinf(q):
        return np.zeros_like(v)
    nrm = lp_norm(v, q)[..., None]
    safe = np.where(nrm > 0, nrm, 1.0)
    r = np.abs(v) / safe
    with np.errstate(divide="ignore", invalid="ignore"):
        h = (q - 1.0) / safe * (r ** (q - 2.0) - r ** (2.0 * q - 2.0))
    return np.where(nrm > 0, h, 0.0)


def dual_norm_value(v, p: float, rho: float) -> float:
    """Worst-case linear perturbation ``max_{||d||_p <= rho} v @ d = rho * ||v||_q``."""
    p = _check_order(p)
    if rho < 0:
        raise ValueError("rho must be non-negative")
    return float(rho * lp_norm(v, dual_order(p)))


def dual_norm_maximizer(v, p: float, rho: float) -> np.ndarray:
    """A point of the l_p ball of radius ``rho`` attaining ``dual_norm_value``."""
    p = _check_order(p)
    v = np.asarray(v, dtype=float)
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if not np.any(v):
        return np.zeros_like(v)
    if np.isinf(p):
        return rho * np.sign(v)
    if p == 1.0:
        d = np.zeros_like(v)
        k = int(np.argmax(np.abs(v)))
        d[k] = rho * np.sign(v[k])
        return d
    # Hoelder equality: d_k proportional to sign(v_k) |v_k|^(q-1)
    return rho * norm_gradient(v, dual_order(p))
