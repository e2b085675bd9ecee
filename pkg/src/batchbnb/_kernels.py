"""Per-column numba kernels for the irregular parts of the batched pipeline.

Inputs are laid out row-per-node (``m x p``, C order) so that every kernel
walks contiguous memory. Each column is processed independently, which makes
the results independent of how columns are split across worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numba
import numpy as np

SENTINEL = -np.finfo(np.float64).max


@numba.njit(cache=True, nogil=True)
def prox_huber_scalar(x, w, M):
    if abs(x) <= (1.0 + w) * M:
        return x / (1.0 + w)
    if x > 0:
        return x - w * M
    return x + w * M


@numba.njit(cache=True, nogil=True)
def _pooled(prefix, a, b, kbar, w, M):
    cnt = b - a + 1
    hi = min(b, kbar - 1)
    wcnt = hi - a + 1 if hi >= a else 0
    wbar = w * wcnt / cnt
    xbar = (prefix[b + 1] - prefix[a]) / cnt
    return prox_huber_scalar(xbar, wbar, M)


@numba.njit(cache=True, nogil=True)
def pava_boundary_column(vals, pf, kbar, w, M, out, prefix):
    """Order-constrained Huber prox on one sorted column.

    ``vals[:pf]`` are nonincreasing magnitudes. Ranks below ``kbar`` carry
    weight ``w``, the rest weight zero, so the initial prox values are already
    nonincreasing on either side of the ``kbar`` boundary and a single pooled
    block grown outward from that boundary resolves every violation.
    """
    prefix[0] = 0.0
    for i in range(pf):
        prefix[i + 1] = prefix[i] + vals[i]
        wi = w if i < kbar else 0.0
        out[i] = prox_huber_scalar(vals[i], wi, M)
    if kbar <= 0 or kbar >= pf:
        return
    a = kbar - 1
    b = kbar
    if out[a] >= out[b]:
        return
    val = _pooled(prefix, a, b, kbar, w, M)
    while True:
        if a > 0 and out[a - 1] < val:
            a -= 1
            val = _pooled(prefix, a, b, kbar, w, M)
        elif b < pf - 1 and val < out[b + 1]:
            b += 1
            val = _pooled(prefix, a, b, kbar, w, M)
        else:
            break
    for i in range(a, b + 1):
        out[i] = val


@numba.njit(cache=True, nogil=True)
def pava_boundary_rows(vals, pf, kbar, w, M, out, start, stop):
    p = vals.shape[1]
    prefix = np.empty(p + 1)
    for b in range(start, stop):
        pava_boundary_column(vals[b], pf[b], kbar[b], w, M, out[b], prefix)


@numba.njit(cache=True, nogil=True)
def recover_column(mags, pf, kbar):
    """Threshold recovery for one column of sorted free magnitudes.

    Returns ``(case, s, tau, half_sum)`` where ``half_sum`` is
    ``0.5 * sum beta_j^2 / z_j`` over the free coordinates. ``case`` is 0 for
    an exhausted budget, 1 for the nonbinding case, 2 for the binding case and
    -1 if no consistent ``s`` exists.
    """
    nnz = 0
    for i in range(pf):
        if mags[i] > 0.0:
            nnz += 1
    if kbar <= 0:
        if nnz == 0:
            return 0, 0, math.nan, 0.0
        return -1, 0, math.nan, math.inf
    if nnz <= kbar:
        acc = 0.0
        for i in range(pf):
            acc += mags[i] * mags[i]
        return 1, nnz, math.nan, 0.5 * acc
    suffix = np.empty(pf + 1)
    suffix[pf] = 0.0
    for i in range(pf - 1, -1, -1):
        suffix[i] = suffix[i + 1] + mags[i]
    for tol in (0.0, 1e-10):
        for s in range(kbar):
            tau = suffix[s] / (kbar - s)
            upper = math.inf if s == 0 else mags[s - 1]
            if upper >= tau * (1.0 - tol) and tau * (1.0 + tol) >= mags[s]:
                head = 0.0
                for i in range(s):
                    head += mags[i] * mags[i]
                return 2, s, tau, 0.5 * (head + tau * suffix[s])
    return -1, 0, math.nan, math.inf


@numba.njit(cache=True, nogil=True)
def recover_rows(mags, pf, kbar, cases, ss, taus, vals, start, stop):
    for b in range(start, stop):
        c, s, t, v = recover_column(mags[b], pf[b], kbar[b])
        cases[b] = c
        ss[b] = s
        taus[b] = t
        vals[b] = v


def run_rows(kernel, m: int, workers: int, *args) -> None:
    """Call ``kernel(*args, start, stop)`` over row chunks on ``workers`` threads."""
    if workers <= 1 or m <= 1:
        kernel(*args, 0, m)
        return
    bounds = np.linspace(0, m, min(workers, m) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [
            pool.submit(kernel, *args, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
        ]
        for f in futs:
            f.result()


# status codes for the row kernels
FREE, ONE, ZERO = 0, 1, 2


def free_order(values, status):
    """Per row, free positions by decreasing ``|values|`` followed by the rest.

    Ties are ordered arbitrarily; the prox is unique, so its value does not
    depend on how ties are ranked.
    """
    keys = np.where(status == FREE, -np.abs(values), np.inf)
    return np.argsort(keys, axis=1)


@numba.njit(cache=True, nogil=True)
def _conj_prox_row(u, status, order, pf, kbar, w, M, alpha, vals, out, prefix):
    """``prox_{w g*}`` of one already scaled row ``u`` into ``alpha``."""
    p = u.shape[0]
    for j in range(p):
        st = status[j]
        if st == ONE:
            alpha[j] = prox_huber_scalar(u[j], w, M)
        elif st == ZERO:
            alpha[j] = u[j]
    if pf == 0:
        return
    for r in range(pf):
        vals[r] = abs(u[order[r]])
    pava_boundary_column(vals, pf, kbar, w, M, out, prefix)
    for r in range(pf):
        j = order[r]
        alpha[j] = out[r] if u[j] >= 0 else -out[r]


@numba.njit(cache=True, nogil=True)
def conj_prox_rows(U, status, order, pf, kbar, w, M, alpha, start, stop):
    p = U.shape[1]
    vals = np.empty(p)
    out = np.empty(p)
    prefix = np.empty(p + 1)
    for b in range(start, stop):
        _conj_prox_row(U[b], status[b], order[b], pf[b], kbar[b], w, M, alpha[b],
                       vals, out, prefix)


@numba.njit(cache=True, nogil=True)
def prox_step_rows(U, status, order, pf, kbar, rho, M, B, start, stop):
    """Node prox of every row of ``U`` through the conjugate (Moreau's identity)."""
    p = U.shape[1]
    vals = np.empty(p)
    out = np.empty(p)
    prefix = np.empty(p + 1)
    scaled = np.empty(p)
    alpha = np.empty(p)
    for b in range(start, stop):
        u = U[b]
        st = status[b]
        for j in range(p):
            scaled[j] = rho * u[j]
        _conj_prox_row(scaled, st, order[b], pf[b], kbar[b], rho, M, alpha, vals, out, prefix)
        used = 0.0
        row = B[b]
        for j in range(p):
            if st[j] == ZERO:
                v = 0.0
            else:
                v = u[j] - alpha[j] / rho
                if v > M:
                    v = M
                elif v < -M:
                    v = -M
            row[j] = v
            if st[j] == FREE:
                used += abs(v)
        used /= M
        # rounding can leave the free budget a hair above kbar
        if used > kbar[b]:
            scale = kbar[b] / used
            for j in range(p):
                if st[j] == FREE:
                    row[j] *= scale


@numba.njit(cache=True, nogil=True)
def g_rows(B, status, order, pf, kbar, M, out, start, stop):
    """``g`` of every row of ``B``; ``+inf`` where the row is infeasible."""
    p = B.shape[1]
    mags = np.empty(p)
    for b in range(start, stop):
        row = B[b]
        st = status[b]
        fixed = 0.0
        bad = False
        used = 0.0
        for j in range(p):
            a = abs(row[j])
            if a > M * (1.0 + 1e-12):
                bad = True
            if st[j] == ZERO:
                if a > 0.0:
                    bad = True
            elif st[j] == ONE:
                fixed += 0.5 * row[j] * row[j]
            else:
                used += a
        kb = kbar[b]
        if bad or used / M > kb + 1e-9 * max(1, kb):
            out[b] = math.inf
            continue
        n = pf[b]
        for r in range(n):
            mags[r] = abs(row[order[b, r]])
        case, s, tau, half = recover_column(mags, n, kb)
        out[b] = math.inf if case < 0 else fixed + half


@numba.njit(cache=True, nogil=True)
def g_conj_rows(H, status, order, pf, kbar, out, start, stop):
    """``g*`` rows from Huber values ``H``: J1 entries plus the top ``kbar`` free ones."""
    p = H.shape[1]
    for b in range(start, stop):
        row = H[b]
        st = status[b]
        acc = 0.0
        for j in range(p):
            if st[j] == ONE:
                acc += row[j]
        take = min(kbar[b], pf[b])
        for r in range(take):
            acc += row[order[b, r]]
        out[b] = acc
