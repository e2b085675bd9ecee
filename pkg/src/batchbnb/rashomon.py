"""Support-level Rashomon sets: collection, trie-and-offset storage, analytics.

A support ``S`` (``|S| <= k``) belongs to the epsilon-Rashomon set when its
restricted optimum ``v(S)`` is at most ``(1 + eps) * Phi*``. Collection
reuses the branch-and-bound loop with a looser, strict pruning threshold::

    tau = min((1 + eps) * UB, v_N)

where ``v_N`` is the ``N``-th best objective stored so far (``+inf`` until
``N`` records exist).

Stored supports go into a trie keyed by their insertion sequence; the fitted
coefficients of all records share one flat vector ``c`` with offsets ``o``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import SolverConfig, solve
from .losses import LossKind, loss_value

__all__ = [
    "RashomonConfig",
    "RashomonPool",
    "SupportTrie",
    "trie_insert",
    "trie_recover",
    "collect_rashomon",
    "support_frequency",
    "model_reliance",
    "secondary_metrics",
]


@dataclass(frozen=True)
class RashomonConfig:
    epsilon: float = 0.1
    cap: int | None = None  # None: unlimited

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.cap is not None and self.cap < 1:
            raise ValueError("cap must be a positive int or None")


# -- trie ------------------------------------------------------------------

@dataclass
class SupportTrie:
    """Prefix tree over insertion sequences with a flat coefficient store.

    Node 0 is the root. ``parent[v]`` and ``label[v]`` describe the edge into
    node ``v`` (both -1 for the root). Record ``m`` ends at trie node
    ``leaves[m]``; its coefficients are ``c[o[m]:o[m + 1]]`` in path order.
    """

    p: int | None = None
    parent: list = field(default_factory=lambda: [-1])
    label: list = field(default_factory=lambda: [-1])
    leaves: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    c: list = field(default_factory=list)
    o: list = field(default_factory=lambda: [0])
    _children: list = field(default_factory=lambda: [{}], repr=False)
    _by_set: dict = field(default_factory=dict, repr=False)
    _by_leaf: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.leaves)

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    def path(self, leaf: int) -> list:
        out = []
        v = leaf
        while v > 0:
            out.append(self.label[v])
            v = self.parent[v]
        return out[::-1]

    def record(self, m: int):
        """``(sorted support, coefficient slice, objective)`` of record ``m``."""
        return trie_recover(self, self.leaves[m])

    def records(self):
        for m in range(len(self)):
            yield self.record(m)

    def to_dict(self, feature_index=None) -> dict:
        def lab(a):
            if a < 0 or feature_index is None:
                return int(a)
            return int(feature_index[a]) + 1

        return {
            "parent": [int(v) for v in self.parent],
            "label": [lab(a) for a in self.label],
            "leaves": [int(v) for v in self.leaves],
            "objectives": [float(v) for v in self.objectives],
            "c": [float(v) for v in self.c],
            "o": [int(v) for v in self.o],
        }

    @classmethod
    def from_dict(cls, data: dict, p: int | None = None) -> "SupportTrie":
        trie = cls(p=p)
        parent, label = data["parent"], data["label"]
        for v in range(1, len(parent)):
            trie.parent.append(int(parent[v]))
            trie.label.append(int(label[v]))
            trie._children.append({})
            trie._children[int(parent[v])][int(label[v])] = v
        o = data["o"]
        for m, (leaf, obj) in enumerate(zip(data["leaves"], data["objectives"])):
            trie.leaves.append(int(leaf))
            trie.objectives.append(float(obj))
            trie._by_leaf[int(leaf)] = m
            trie._by_set[frozenset(trie.path(int(leaf)))] = m
        trie.c = [float(v) for v in data["c"]]
        trie.o = [int(v) for v in o]
        return trie


def trie_insert(trie: SupportTrie, labels, coefficients, objective: float) -> int:
    """Insert one record and return its trie leaf id.

    A support set that is already stored (under any insertion order) is not
    inserted again; its existing leaf is returned.
    """
    labels = [int(a) for a in labels]
    coefficients = np.asarray(coefficients, dtype=float).ravel()
    if len(set(labels)) != len(labels):
        raise ValueError(f"labels must be distinct: {labels}")
    if coefficients.shape[0] != len(labels):
        raise ValueError("one coefficient per label is required")
    key = frozenset(labels)
    if key in trie._by_set:
        return trie.leaves[trie._by_set[key]]
    v = 0
    for a in labels:
        nxt = trie._children[v].get(a)
        if nxt is None:
            nxt = len(trie.parent)
            trie.parent.append(v)
            trie.label.append(a)
            trie._children.append({})
            trie._children[v][a] = nxt
        v = nxt
    m = len(trie.leaves)
    trie.leaves.append(v)
    trie.objectives.append(float(objective))
    trie.c.extend(float(x) for x in coefficients)
    trie.o.append(trie.o[-1] + len(labels))
    trie._by_set[key] = m
    trie._by_leaf[v] = m
    return v


def trie_recover(trie: SupportTrie, leaf: int):
    """``(sorted support, coefficients in path order, objective)`` stored at ``leaf``."""
    try:
        m = trie._by_leaf[int(leaf)]
    except KeyError:
        raise LookupError(f"no record ends at trie node {leaf}") from None
    coefs = np.array(trie.c[trie.o[m]:trie.o[m + 1]])
    return tuple(sorted(trie.path(leaf))), coefs, trie.objectives[m]


# -- collection ------------------------------------------------------------

class RashomonPool:
    """Pool of evaluated models consulted by the search loop."""

    def __init__(self, rconfig: RashomonConfig):
        self.rconfig = rconfig
        self._records: dict = {}  # sorted support -> (sequence, coefs, objective)
        self._best: list = []  # max-heap (negated) of the cap smallest objectives

    def __len__(self) -> int:
        return len(self._records)

    def nth_best(self) -> float:
        cap = self.rconfig.cap
        if cap is None or len(self._best) < cap:
            return math.inf
        return -self._best[0]

    def threshold(self, ub: float) -> float:
        return min((1.0 + self.rconfig.epsilon) * ub, self.nth_best())

    def add(self, seq, coefs, objective: float, ub: float) -> None:
        key = tuple(sorted(seq))
        if key in self._records or objective > self.threshold(ub):
            return
        self._records[key] = (tuple(seq), np.asarray(coefs, dtype=float), float(objective))
        cap = self.rconfig.cap
        if cap is not None:
            if len(self._best) < cap:
                heapq.heappush(self._best, -objective)
            elif objective < -self._best[0]:
                heapq.heapreplace(self._best, -objective)

    def enumerate_leaves(self, leaves, cache, offer, tau) -> None:
        """Evaluate every support of the leaves' subtrees that can reach the pool.

        A leaf's subtree holds the supports ``J1 | T`` with ``T`` any subset of
        its free set. ``v`` only grows as features are removed, so subsets are
        visited top-down and a subset is kept as a candidate only when every
        one-larger superset made the threshold.
        """
        levels = []
        for nd in leaves:
            free = tuple(int(j) for j in nd.free) if nd.kbar > 0 else ()
            levels.append((nd, free, {free}))
        while levels:
            requests = []
            for nd, free, cands in levels:
                for T in sorted(cands):
                    requests.append(tuple(nd.fixed_one) + T)
            evaluated = cache.evaluate(requests)
            offer(evaluated)
            t = tau()
            pos = 0
            nxt = []
            for nd, free, cands in levels:
                good = set()
                for T in sorted(cands):
                    if evaluated[pos][2] <= t:
                        good.add(T)
                    pos += 1
                children = set()
                for T in good:
                    for r in range(len(T)):
                        sub = T[:r] + T[r + 1:]
                        rest = [j for j in free if j not in sub]
                        if all(tuple(sorted(sub + (j,))) in good for j in rest):
                            children.add(sub)
                if children:
                    nxt.append((nd, free, children))
            levels = nxt

    def finalize(self, phi_star: float, p: int | None = None) -> SupportTrie:
        limit = (1.0 + self.rconfig.epsilon) * phi_star
        live = [(obj, key, seq, c) for key, (seq, c, obj) in self._records.items() if obj <= limit]
        live.sort(key=lambda r: (r[0], r[1]))
        if self.rconfig.cap is not None:
            live = live[:self.rconfig.cap]
        trie = SupportTrie(p=p)
        for obj, _, seq, c in live:
            trie_insert(trie, seq, c, obj)
        return trie


def collect_rashomon(instance, config: SolverConfig | None = None,
                     rconfig: RashomonConfig | None = None):
    """Certified optimum plus the (capped) epsilon-Rashomon set as a trie."""
    rconfig = rconfig or RashomonConfig()
    pool = RashomonPool(rconfig)
    cert = solve(instance, config, pool=pool)
    return cert, pool.finalize(cert.optimal_value, p=instance.p)


# -- analytics -------------------------------------------------------------

def _require_records(trie):
    if len(trie) == 0:
        raise ValueError("the Rashomon pool is empty")


def support_frequency(trie: SupportTrie, p: int | None = None) -> np.ndarray:
    """Fraction of stored supports that contain each feature."""
    _require_records(trie)
    p = p if p is not None else trie.p
    if p is None:
        raise ValueError("number of features unknown; pass p")
    counts = np.zeros(p)
    for support, _, _ in trie.records():
        counts[list(support)] += 1.0
    return counts / len(trie)


def _dense_models(trie, p):
    for m in range(len(trie)):
        leaf = trie.leaves[m]
        labels = trie.path(leaf)
        _, coefs, obj = trie_recover(trie, leaf)
        beta = np.zeros(p)
        beta[labels] = coefs
        yield beta, obj


def model_reliance(trie: SupportTrie, instance) -> dict:
    """Per-feature increase in mean loss when its fitted contribution is dropped.

    Returns ``min``, ``mean`` and ``max`` over the stored models (length-p
    arrays) plus ``extension=True`` for squared loss, where the same recipe is
    applied to the squared loss instead of the logistic loss.
    """
    _require_records(trie)
    X, y, kind = instance.X, instance.y, instance.loss
    scores = []
    for beta, _ in _dense_models(trie, instance.p):
        eta = X @ beta
        base = loss_value(kind, eta, y).mean()
        r = np.zeros(instance.p)
        for j in np.flatnonzero(beta):
            r[j] = loss_value(kind, eta - X[:, j] * beta[j], y).mean() - base
        scores.append(r)
    S = np.array(scores)
    return {"min": S.min(axis=0), "mean": S.mean(axis=0), "max": S.max(axis=0),
            "per_model": S, "extension": kind is LossKind.SQUARED}


def _auc(scores, y) -> float:
    """Mann-Whitney statistic; ties between classes count one half."""
    scores = np.asarray(scores, dtype=float)
    pos, neg = scores[y > 0], np.sort(scores[y <= 0])
    below = np.searchsorted(neg, pos, side="left")
    ties = np.searchsorted(neg, pos, side="right") - below
    # integer counts, one rounding at the end
    twice = 2 * int(below.sum()) + int(ties.sum())
    return twice / (2 * pos.size * neg.size)


def secondary_metrics(trie: SupportTrie, instance, threshold: float = 0.5) -> list[dict]:
    """AUC, accuracy at ``threshold`` and objective per stored model, by objective."""
    _require_records(trie)
    if instance.loss is not LossKind.LOGISTIC:
        raise ValueError("secondary metrics need a logistic instance")
    y = instance.y
    if np.unique(y).size < 2:
        raise ValueError("AUC is undefined when only one class is present")
    cut = math.log(threshold / (1.0 - threshold))
    rows = []
    for m, (beta, obj) in enumerate(_dense_models(trie, instance.p)):
        eta = instance.X @ beta
        pred = np.where(eta >= cut, 1.0, -1.0)
        rows.append({"record": m, "objective": float(obj), "auc": _auc(eta, y),
                     "accuracy": float(np.mean(pred == y))})
    rows.sort(key=lambda r: (r["objective"], r["record"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return rows
