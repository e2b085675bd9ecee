"""Indicator recovery, rounding, support re-optimisation and branching choice.

The relaxed indicators are never solved for. Given relaxed coefficients ``b``
at a node, the optimal ``z`` follows from a threshold ``tau`` on the sorted
free magnitudes, and both the rounded support and the branching variable are
read off the magnitudes directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import SENTINEL
from .losses import LossKind, loss_derivative, loss_value

__all__ = [
    "RecoveredIndicators",
    "recover_indicators",
    "round_support",
    "round_supports",
    "select_branch_variable",
    "select_branch_variables",
    "reoptimize_supports",
]


@dataclass(frozen=True)
class RecoveredIndicators:
    z: np.ndarray
    tau: float  # nan outside the binding-budget case
    cap_count: int
    permutation: np.ndarray  # free indices by decreasing |b_j|


def _free_order(beta: np.ndarray, free: np.ndarray) -> np.ndarray:
    return free[np.argsort(-np.abs(beta[free]), kind="stable")]


def recover_indicators(beta, node, k: int | None = None, M: float = 1.0,
                       *, tol: float = 1e-9) -> RecoveredIndicators:
    """Optimal relaxed indicators paired with ``beta`` at ``node``.

    Raises ``ValueError`` when ``beta`` lies outside the node's relaxation
    domain (a violated precondition, not a numerical accident).
    """
    beta = np.asarray(beta, dtype=float)
    free = node.free
    kbar = node.kbar
    if np.any(beta[list(node.fixed_zero)] != 0.0):
        raise ValueError("beta is nonzero on a coordinate fixed to zero")
    if np.any(np.abs(beta) > M * (1.0 + tol)):
        raise ValueError("beta violates the box |beta_j| <= M")
    if np.abs(beta[free]).sum() / M > kbar + tol * max(1, kbar):
        raise ValueError("beta violates the budget sum_free |beta_j| / M <= kbar")
    perm = _free_order(beta, free)
    mags = np.ascontiguousarray(np.abs(beta[perm]))
    case, s, tau, _ = _kernels.recover_column(mags, mags.shape[0], kbar)
    if case < 0:
        raise ValueError("no consistent threshold; beta is outside the node domain")
    z = np.zeros(node.p)
    z[list(node.fixed_one)] = 1.0
    if case == 1:
        z[free] = (beta[free] != 0.0).astype(float)
    elif case == 2:
        zs = np.minimum(1.0, mags / tau)
        zs[:s] = 1.0
        z[perm] = zs
    return RecoveredIndicators(z, float(tau), int(s), perm)


def round_support(beta, node, k: int | None = None) -> tuple:
    """``J1`` followed by the ``kbar`` largest free ``|beta_j|`` (ties: lower index)."""
    beta = np.asarray(beta, dtype=float)
    kbar = node.kbar
    chosen = _free_order(beta, node.free)[:max(kbar, 0)]
    return tuple(node.fixed_one) + tuple(int(j) for j in chosen)


def select_branch_variable(beta, node) -> int:
    free = node.free
    if free.size == 0:
        raise ValueError("node has no free coordinate to branch on")
    beta = np.asarray(beta, dtype=float)
    return int(free[np.argmax(np.abs(beta[free]))])


def _sorted_free_order(B, meta):
    keys = np.where(meta.free_mask, np.abs(B), SENTINEL)
    return np.argsort(-keys, axis=0, kind="stable")


def round_supports(B, nodes, meta) -> list[tuple]:
    """Column-wise :func:`round_support` from one padded batched sort."""
    order = _sorted_free_order(B, meta)
    out = []
    for b, node in enumerate(nodes):
        kk = max(node.kbar, 0)
        out.append(tuple(node.fixed_one) + tuple(int(j) for j in order[:kk, b]))
    return out


def select_branch_variables(B, meta) -> np.ndarray:
    keys = np.where(meta.free_mask, np.abs(B), -1.0)
    return np.argmax(keys, axis=0)


# -- re-optimisation -------------------------------------------------------

def reoptimize_supports(supports, instance, *, tol: float = 1e-8, max_iter: int = 5000):
    """Box-constrained ridge / logistic fit restricted to each support.

    Returns ``(coefs, objectives)``: ``coefs[b]`` is aligned with
    ``supports[b]`` (same order) and ``objectives[b]`` is the exact objective
    of those coefficients. Uses projected gradient with Nesterov momentum and
    gradient restarts, one step size per support from the support's own Gram
    spectrum; stops when the gradient-mapping norm drops to ``tol``.
    """
    supports = [tuple(int(j) for j in s) for s in supports]
    m = len(supports)
    if m == 0:
        return [], np.empty(0)
    X, y = instance.X, instance.y
    kind, lam, M = instance.loss, instance.lambda2, instance.M
    kmax = max(1, max(len(s) for s in supports))
    idx = np.zeros((m, kmax), dtype=np.int64)
    mask = np.zeros((m, kmax), dtype=bool)
    for b, s in enumerate(supports):
        idx[b, :len(s)] = s
        mask[b, :len(s)] = True
    Xg = X[:, idx] * mask[None, :, :]  # n x m x kmax, padded slots are zero columns
    gram = np.einsum("nmk,nml->mkl", Xg, Xg)
    lmax = np.linalg.eigvalsh(gram)[:, -1]
    L = kind.curvature * lmax * (1.0 + 1e-10) + 2.0 * lam
    eta = (1.0 / L)[:, None]

    if kind is LossKind.SQUARED:
        Xty = np.einsum("nmk,n->mk", Xg, y)

        def grad(beta, a):
            return np.einsum("mkl,ml->mk", gram[a], beta) - Xty[a] + 2.0 * lam * beta
    else:
        def grad(beta, a):
            Xa = Xg[:, a, :]
            S = np.einsum("nmk,mk->nm", Xa, beta)
            R = loss_derivative(kind, S, y[:, None], check=False)
            return np.einsum("nmk,nm->mk", Xa, R) + 2.0 * lam * beta

    x = np.zeros((m, kmax))
    yk = x.copy()
    t = np.ones(m)
    active = np.ones(m, dtype=bool)
    for _ in range(max_iter):
        a = np.flatnonzero(active)
        if a.size == 0:
            break
        ya = yk[a]
        ea = eta[a]
        g = grad(ya, a)
        xn = np.clip(ya - ea * g, -M, M) * mask[a]
        gm = np.linalg.norm((ya - xn) / ea, axis=1)
        done = gm <= tol
        # momentum with gradient-based restart
        xa = x[a]
        restart = np.einsum("mk,mk->m", ya - xn, xn - xa) > 0
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t[a] ** 2))
        mom = np.where(restart, 0.0, (t[a] - 1.0) / tn)
        x[a] = xn
        yk[a] = xn + mom[:, None] * (xn - xa)
        t[a] = np.where(restart, 1.0, tn)
        yk[a[done]] = xn[done]
        active[a[done]] = False
    S = np.einsum("nmk,mk->nm", Xg, x)
    obj = loss_value(kind, S, y[:, None], check=False).sum(axis=0) + lam * (x * x).sum(axis=1)
    coefs = [x[b, :len(s)].copy() for b, s in enumerate(supports)]
    return coefs, obj

