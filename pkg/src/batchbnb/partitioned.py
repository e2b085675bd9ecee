"""Row-partitioned evaluation of the batched gradient and dual quantities.

The rows of ``X`` are split into ``D`` contiguous groups. Each group computes
its local ``S, R, Z``, the local products ``X_d^T R_d`` and ``X_d^T Z_d`` and
its share of the loss and conjugate sums; the coordinator adds the pieces in
ascending group order and applies the node-dependent terms (``g``, ``g*``)
once on the reduced quantities.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .losses import loss_conjugate, loss_derivative, loss_value
from .prox import BatchMeta, g_conjugate_values, g_values

__all__ = ["RowPartition", "partition_rows", "partitioned_batch_eval", "coordinate_objectives"]


@dataclass(frozen=True)
class RowPartition:
    bounds: tuple  # (start, stop) per group, ascending and contiguous
    X_groups: tuple
    y_groups: tuple

    @property
    def D(self) -> int:
        return len(self.bounds)

    @property
    def sizes(self) -> tuple:
        return tuple(stop - start for start, stop in self.bounds)


def partition_rows(instance, D: int) -> RowPartition:
    n = instance.n
    if not 1 <= D <= n:
        raise ValueError(f"need 1 <= D <= n={n}, got D={D}")
    pieces = np.array_split(np.arange(n), D)
    bounds = tuple((int(ix[0]), int(ix[-1]) + 1) for ix in pieces)
    return RowPartition(
        bounds,
        tuple(instance.X[a:b] for a, b in bounds),
        tuple(instance.y[a:b] for a, b in bounds),
    )


def _local(Xd, yd, B, kind, lambda2):
    S = Xd @ B
    R = loss_derivative(kind, S, yd[:, None], check=False)
    Z = -R
    G = Xd.T @ R
    Q = (Xd.T @ Z) / (2.0 * lambda2)
    phi = loss_value(kind, S, yd[:, None], check=False).sum(axis=0)
    psi = -loss_conjugate(kind, R, yd[:, None]).sum(axis=0)
    return G, Q, phi, psi


def partitioned_batch_eval(B, partition: RowPartition, instance, lambda2: float | None = None,
                           *, workers: int = 1):
    """Reduced ``(G, Q, phi, psi)`` over the row groups.

    ``phi[b]`` is the loss sum and ``psi[b] = -sum l*(R, y)`` the conjugate
    term of column ``b``; group contributions are summed in group order.
    """
    lam = instance.lambda2 if lambda2 is None else lambda2
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != instance.p:
        raise ValueError(f"B must be {instance.p} x m, got {B.shape}")
    args = [(Xd, yd, B, instance.loss, lam) for Xd, yd in zip(partition.X_groups, partition.y_groups)]
    if workers > 1 and partition.D > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _local(*a), args))
    else:
        parts = [_local(*a) for a in args]
    m = B.shape[1]
    G = np.zeros((instance.p, m))
    Q = np.zeros((instance.p, m))
    phi = np.zeros(m)
    psi = np.zeros(m)
    for Gd, Qd, fd, sd in parts:
        G += Gd
        Q += Qd
        phi += fd
        psi += sd
    return G, Q, phi, psi


def coordinate_objectives(B, Q, phi, psi, meta: BatchMeta, instance):
    """Primal and dual objective vectors from reduced pieces."""
    lam, M = instance.lambda2, instance.M
    primal = phi + 2.0 * lam * g_values(B, meta, M)
    dual = psi - 2.0 * lam * g_conjugate_values(Q, meta, M)
    return primal, dual
