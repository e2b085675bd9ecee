"""Batched lower bounds: proximal gradient on the perspective relaxation.

Every column of ``B`` (``p x m``) is an independent node relaxation::

    Phi_b(beta) = sum_i l(x_i^T beta, y_i) + 2 lambda2 g_b(beta)

The smooth part is shared through the GEMMs ``S = X B`` and ``G = X^T R``;
the nonsmooth part goes through :func:`prox_step`. Dual candidates are read
off the current derivative matrix ``R`` and give a valid lower bound at any
iterate, converged or not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .losses import LossKind, loss_conjugate, loss_derivative, loss_value, smoothness_constant
from .prox import BatchMeta, g_conjugate_values, g_values, prox_step

__all__ = [
    "gram_for",
    "NumericalError",
    "RelaxConfig",
    "BatchWorkspace",
    "RelaxationResult",
    "batched_gradient",
    "dual_bounds",
    "primal_values",
    "solve_batch_relaxation",
]

PRUNABLE = "prunable"
CONVERGED = "converged"
CAPPED = "iteration-capped"


class NumericalError(FloatingPointError):
    """A non-finite iterate appeared; ``column`` is the offending batch position."""

    def __init__(self, message: str, column: int):
        super().__init__(message)
        self.column = column


@dataclass(frozen=True)
class RelaxConfig:
    max_iterations: int = 2000
    gap_tolerance: float = 1e-6
    check_interval: int = 10
    acceleration: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.gap_tolerance > 0:
            raise ValueError("gap_tolerance must be > 0")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")


@dataclass
class BatchWorkspace:
    B: np.ndarray
    S: np.ndarray | None = None
    R: np.ndarray | None = None
    Z: np.ndarray | None = None
    Q: np.ndarray | None = None
    primal_values: np.ndarray | None = None
    dual_values: np.ndarray | None = None


@dataclass
class RelaxationResult:
    beta: np.ndarray  # p x m final iterates
    lower_bound: np.ndarray  # best dual value seen per column
    status: list
    primal: np.ndarray  # Phi at the final iterate
    iterations: np.ndarray
    trace: list = field(default_factory=list)  # (column, iteration, dual, primal)


def _check_finite(A, offset_cols=None):
    bad = ~np.isfinite(A).all(axis=0)
    if bad.any():
        col = int(np.flatnonzero(bad)[0])
        if offset_cols is not None:
            col = int(offset_cols[col])
        raise NumericalError(f"non-finite iterate in batch column {col}", col)


def batched_gradient(B, instance, workspace: BatchWorkspace | None = None) -> np.ndarray:
    """``X^T R`` with ``R = l'(X B, y)``; caches ``S`` and ``R`` in ``workspace``."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != instance.p:
        raise ValueError(f"B must be {instance.p} x m, got {B.shape}")
    _check_finite(B)
    S = instance.X @ B
    R = loss_derivative(instance.loss, S, instance.y[:, None], check=False)
    if workspace is not None:
        workspace.S, workspace.R = S, R
    return instance.X.T @ R


def dual_bounds(workspace: BatchWorkspace, meta: BatchMeta, instance) -> np.ndarray:
    R = workspace.R
    lam = instance.lambda2
    Z = -R
    Q = (instance.X.T @ Z) / (2.0 * lam)
    conj = loss_conjugate(instance.loss, R, instance.y[:, None]).sum(axis=0)
    psi = -conj - 2.0 * lam * g_conjugate_values(Q, meta, instance.M)
    workspace.Z, workspace.Q, workspace.dual_values = Z, Q, psi
    return psi


def primal_values(workspace: BatchWorkspace, meta: BatchMeta, instance, *, workers: int = 1):
    loss = loss_value(instance.loss, workspace.S, instance.y[:, None], check=False).sum(axis=0)
    phi = loss + 2.0 * instance.lambda2 * g_values(workspace.B, meta, instance.M, workers=workers)
    workspace.primal_values = phi
    return phi


def gram_for(instance):
    """``(X^T X, X^T y)`` when it makes the squared-loss gradient cheaper, else ``None``."""
    if instance.loss is not LossKind.SQUARED or instance.p > 2 * instance.n:
        return None
    X = instance.X
    return X.T @ X, X.T @ instance.y


def solve_batch_relaxation(nodes, instance, config: RelaxConfig | None = None,
                           prune_threshold: float = math.inf, *, L: float | None = None,
                           gram=None, workers: int = 1, trace: bool = False) -> RelaxationResult:
    """Run the batched (accelerated) proximal gradient scheme on ``nodes``.

    Columns are checked at iteration 0 and every ``check_interval`` steps and
    leave the batch as soon as they are prunable (best dual ``>=
    prune_threshold``) or converged; the remaining ones stop at
    ``max_iterations``. Only still-active columns take part in later GEMMs.

    ``gram`` may carry ``(X^T X, X^T y)`` for the squared loss; the gradient
    is then one ``p x p`` product instead of two ``n x p`` ones.
    """
    config = config or RelaxConfig()
    nodes = list(nodes)
    if not nodes:
        raise ValueError("empty batch")
    m, p = len(nodes), instance.p
    if L is None:
        L = smoothness_constant(instance.loss, instance.X)
    eta = 1.0 / L
    X, y, lam, M = instance.X, instance.y[:, None], instance.lambda2, instance.M

    meta_all = BatchMeta.from_nodes(nodes)
    B0 = np.column_stack([n.warm_start for n in nodes]).astype(float)
    B0[meta_all.zero_mask] = 0.0
    np.clip(B0, -M, M, out=B0)
    used = np.where(meta_all.free_mask, np.abs(B0), 0.0).sum(axis=0) / M
    over = used > meta_all.kbar
    if over.any():
        scale = np.where(over, meta_all.kbar / np.where(over, used, 1.0), 1.0)
        B0 = np.where(meta_all.free_mask, B0 * scale, B0)

    out_beta = B0.copy()
    out_lb = np.full(m, -math.inf)
    out_phi = np.full(m, math.inf)
    out_iter = np.zeros(m, dtype=np.int64)
    status = [CAPPED] * m
    records: list = []

    cols = np.arange(m)
    meta = meta_all
    B = B0
    Y = B0.copy()
    t = np.ones(m)
    best = np.full(m, -math.inf)
    prev_gap = np.full(m, math.inf)
    ci = config.check_interval
    ws = BatchWorkspace(B=B)

    it = 0
    while True:
        if it % ci == 0 or it == config.max_iterations:
            ws.B = B
            ws.S = X @ B
            ws.R = loss_derivative(instance.loss, ws.S, y, check=False)
            psi = dual_bounds(ws, meta, instance)
            phi = primal_values(ws, meta, instance, workers=workers)
            _check_finite(np.vstack([psi, np.where(np.isinf(phi), 0.0, phi)]), cols)
            best = np.maximum(best, psi)
            gap = (phi - best) / np.maximum(1.0, np.abs(phi))
            if trace:
                for c, d, f in zip(cols, psi, phi):
                    records.append((int(c), it, float(d), float(f)))
            prunable = best >= prune_threshold
            converged = ~prunable & (gap <= config.gap_tolerance)
            capped = np.zeros_like(prunable) if it < config.max_iterations else ~(prunable | converged)
            done = prunable | converged | capped
            if done.any():
                for local in np.flatnonzero(done):
                    c = cols[local]
                    out_beta[:, c] = B[:, local]
                    out_lb[c] = best[local]
                    out_phi[c] = phi[local]
                    out_iter[c] = it
                    status[c] = PRUNABLE if prunable[local] else CONVERGED if converged[local] else CAPPED
                keep = np.flatnonzero(~done)
                if keep.size == 0:
                    break
                cols, meta = cols[keep], meta.subset(keep)
                B, Y, t = B[:, keep], Y[:, keep], t[keep]
                best, prev_gap, gap = best[keep], prev_gap[keep], gap[keep]
            if config.acceleration:
                restart = gap > prev_gap
                if restart.any():
                    t = np.where(restart, 1.0, t)
                    Y = np.where(restart[None, :], B, Y)
            prev_gap = gap

        # one proximal gradient step on the active columns
        if gram is not None:
            G = gram[0] @ Y - gram[1][:, None]
        else:
            S = X @ Y
            R = loss_derivative(instance.loss, S, y, check=False)
            G = X.T @ R
        B_new = prox_step(Y - eta * G, eta, lam, meta, M, workers=workers)
        _check_finite(B_new, cols)
        if config.acceleration:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            Y = B_new + ((t - 1.0) / t_new)[None, :] * (B_new - B)
            t = t_new
        else:
            Y = B_new
        B = B_new
        it += 1

    return RelaxationResult(out_beta, out_lb, status, out_phi, out_iter, records)
