"""Batched node-dependent proximal operator and the node functions ``g`` / ``g*``.

For a node with fixings ``(J0, J1, Jf)`` and reduced budget ``kbar``::

    g(b)  = inf_z { 0.5 * sum_j b_j^2 / z_j : z in [0,1]^p, sum z <= k,
                    |b_j| <= M z_j, z_J0 = 0, z_J1 = 1 }
    g*(q) = sum_{J1} H_M(q_j) + TopSum_kbar { H_M(q_j) : j in Jf }

with the Huber function ``H_M(q) = q^2/2`` on ``|q| <= M`` and
``M|q| - M^2/2`` outside. The prox of ``eta * 2 * lambda2 * g`` is evaluated
through the conjugate (Moreau's identity); the conjugate prox is a weighted
isotonic problem on sorted magnitudes solved by pool-adjacent-violators.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "BatchMeta",
    "huber",
    "prox_huber",
    "pava_generic",
    "pava_boundary",
    "batched_conjugate_prox",
    "conjugate_prox_column",
    "prox_step",
    "g_value",
    "g_values",
    "g_conjugate_value",
    "g_conjugate_values",
]


@dataclass(frozen=True)
class BatchMeta:
    """Per-column fixing masks (``p x m``) and budgets for a batch of nodes."""

    free_mask: np.ndarray
    one_mask: np.ndarray
    zero_mask: np.ndarray
    kbar: np.ndarray
    free_count: np.ndarray

    @property
    def status(self) -> np.ndarray:
        """Row-per-node codes (``m x p`` int8): 0 free, 1 fixed to one, 2 fixed to zero."""
        st = self.__dict__.get("_status")
        if st is None:
            st = np.zeros((self.m, self.p), dtype=np.int8)
            st[self.one_mask.T] = _kernels.ONE
            st[self.zero_mask.T] = _kernels.ZERO
            object.__setattr__(self, "_status", st)
        return st

    @property
    def m(self) -> int:
        return self.free_mask.shape[1]

    @property
    def p(self) -> int:
        return self.free_mask.shape[0]

    @classmethod
    def from_nodes(cls, nodes) -> "BatchMeta":
        if not nodes:
            raise ValueError("empty batch")
        p = nodes[0].p
        m = len(nodes)
        zero = np.zeros((p, m), dtype=bool)
        one = np.zeros((p, m), dtype=bool)
        for b, node in enumerate(nodes):
            zero[list(node.fixed_zero), b] = True
            one[list(node.fixed_one), b] = True
        free = ~(zero | one)
        kbar = np.array([node.kbar for node in nodes], dtype=np.int64)
        return cls(free, one, zero, kbar, free.sum(axis=0).astype(np.int64))

    @classmethod
    def from_node(cls, node) -> "BatchMeta":
        return cls.from_nodes([node])

    def subset(self, cols) -> "BatchMeta":
        cols = np.asarray(cols)
        return BatchMeta(
            self.free_mask[:, cols], self.one_mask[:, cols], self.zero_mask[:, cols],
            self.kbar[cols], self.free_count[cols],
        )


def huber(q, M: float):
    q = np.abs(np.asarray(q, dtype=float))
    return np.where(q <= M, 0.5 * q * q, M * q - 0.5 * M * M)


def prox_huber(x, weight, M: float):
    """Minimiser of ``0.5 (v - x)^2 + weight * H_M(v)``."""
    x = np.asarray(x, dtype=float)
    weight = np.asarray(weight, dtype=float)
    inside = np.abs(x) <= (1.0 + weight) * M
    out = np.where(inside, x / (1.0 + weight), x - weight * M * np.sign(x))
    return out[()] if out.ndim == 0 else out


# -- PAVA ------------------------------------------------------------------

def _prefix(vals):
    return [0.0, *itertools.accumulate(float(v) for v in vals)]


def _pooled_value(prefix, a, b, kbar, w, M):
    cnt = b - a + 1
    hi = min(b, kbar - 1)
    wcnt = hi - a + 1 if hi >= a else 0
    return float(_kernels.prox_huber_scalar.py_func(
        (prefix[b + 1] - prefix[a]) / cnt, w * wcnt / cnt, M))


def pava_generic(vals, kbar: int, weight: float, M: float) -> np.ndarray:
    """Full-scan stack PAVA on nonincreasing ``vals`` (reference implementation).

    Solves ``min sum_j 0.5 (v_j - vals_j)^2 + w_j H_M(v_j)`` subject to
    ``v_1 >= v_2 >= ...`` with ``w_j = weight`` for the first ``kbar`` ranks.
    """
    vals = [float(v) for v in vals]
    n = len(vals)
    prefix = _prefix(vals)
    blocks: list[list] = []  # [start, end, value]
    for i, v in enumerate(vals):
        wi = weight if i < kbar else 0.0
        blocks.append([i, i, float(_kernels.prox_huber_scalar.py_func(v, wi, M))])
        while len(blocks) >= 2 and blocks[-2][2] < blocks[-1][2]:
            right = blocks.pop()
            left = blocks[-1]
            left[1] = right[1]
            left[2] = _pooled_value(prefix, left[0], left[1], kbar, weight, M)
    out = np.empty(n)
    for a, b, val in blocks:
        out[a:b + 1] = val
    return out


def pava_boundary(vals, kbar: int, weight: float, M: float) -> np.ndarray:
    """Boundary-seeded PAVA on one nonincreasing column (compiled kernel)."""
    vals = np.ascontiguousarray(vals, dtype=float)
    pf = vals.shape[0]
    out = np.empty(pf)
    _kernels.pava_boundary_column(vals, pf, int(kbar), float(weight), float(M), out,
                                  np.empty(pf + 1))
    return out


# -- conjugate prox --------------------------------------------------------

def batched_conjugate_prox(U_scaled, meta: BatchMeta, weight: float, M: float,
                           *, workers: int = 1) -> np.ndarray:
    """Column-wise ``prox_{weight * g*_b}`` of ``U_scaled`` (``p x m``)."""
    U_rows = np.ascontiguousarray(np.asarray(U_scaled, dtype=float).T)
    order = _kernels.free_order(U_rows, meta.status)
    alpha = np.empty_like(U_rows)
    _kernels.run_rows(_kernels.conj_prox_rows, meta.m, workers, U_rows, meta.status, order,
                      meta.free_count, meta.kbar, float(weight), float(M), alpha)
    return alpha.T.copy()


def conjugate_prox_column(u, free_mask, one_mask, kbar: int, weight: float, M: float,
                          *, method: str = "generic") -> np.ndarray:
    """One-column conjugate prox built without any batching (reference path)."""
    u = np.asarray(u, dtype=float)
    free = np.flatnonzero(free_mask)
    mags = np.abs(u[free])
    order = np.argsort(-mags, kind="stable")
    sorted_mags = mags[order]
    if method == "generic":
        v = pava_generic(sorted_mags, kbar, weight, M)
    else:
        v = pava_boundary(sorted_mags, kbar, weight, M)
    alpha = u.copy()
    res = np.empty_like(sorted_mags)
    res[order] = v
    alpha[free] = np.sign(u[free]) * res
    ones = np.flatnonzero(one_mask)
    alpha[ones] = prox_huber(u[ones], weight, M)
    return alpha


def prox_step(U, eta: float, lambda2: float, meta: BatchMeta, M: float,
              *, workers: int = 1) -> np.ndarray:
    """``prox_{eta * 2 lambda2 * g_b}`` of every column of ``U`` via Moreau's identity.

    The result is clipped to the box and, if rounding pushed the free budget
    above ``kbar``, rescaled back onto it.
    """
    U_rows = np.ascontiguousarray(np.asarray(U, dtype=float).T)
    B_rows = np.empty_like(U_rows)
    rho = 1.0 / (2.0 * eta * lambda2)
    order = _kernels.free_order(U_rows, meta.status)
    _kernels.run_rows(_kernels.prox_step_rows, meta.m, workers, U_rows, meta.status, order,
                      meta.free_count, meta.kbar, float(rho), float(M), B_rows)
    return B_rows.T.copy()


# -- g and g* --------------------------------------------------------------

def g_values(B, meta: BatchMeta, M: float, *, workers: int = 1) -> np.ndarray:
    """``g_b(B[:, b])`` for every column; ``+inf`` where the column is infeasible."""
    B_rows = np.ascontiguousarray(np.asarray(B, dtype=float).T)
    order = _kernels.free_order(B_rows, meta.status)
    out = np.empty(meta.m)
    _kernels.run_rows(_kernels.g_rows, meta.m, workers, B_rows, meta.status, order,
                      meta.free_count, meta.kbar, float(M), out)
    return out


def g_conjugate_values(Q, meta: BatchMeta, M: float, *, workers: int = 1) -> np.ndarray:
    """``g*_b(Q[:, b])`` for every column."""
    H = huber(np.asarray(Q, dtype=float).T, M)
    H = np.ascontiguousarray(H)
    order = _kernels.free_order(H, meta.status)
    out = np.empty(meta.m)
    _kernels.run_rows(_kernels.g_conj_rows, meta.m, workers, H, meta.status, order,
                      meta.free_count, meta.kbar, out)
    return out


def g_value(beta, node, k: int | None = None, M: float = 1.0) -> float:
    meta = BatchMeta.from_node(node)
    return float(g_values(np.asarray(beta, dtype=float)[:, None], meta, M)[0])


def g_conjugate_value(q, node, k: int | None = None, M: float = 1.0) -> float:
    meta = BatchMeta.from_node(node)
    return float(g_conjugate_values(np.asarray(q, dtype=float)[:, None], meta, M)[0])
