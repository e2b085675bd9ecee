"""Batched branch-and-bound orchestration, certificates and component profiling.

One orchestration thread owns the queue and the incumbent. Every iteration
pops a batch of open nodes, bounds all of them in one batched relaxation
solve, rounds and re-optimises the survivors in one batched call, then prunes
or branches node by node.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .heuristics import reoptimize_supports, round_supports, select_branch_variables
from .losses import LossKind, smoothness_constant
from .nodes import NodeQueue, assemble_batch, branch, root_node
from .prox import BatchMeta
from .relaxation import NumericalError, RelaxConfig, gram_for, solve_batch_relaxation

__all__ = [
    "SolverConfig",
    "ComponentProfile",
    "Certificate",
    "solve",
    "auto_batch_size",
    "batch_size_sweep",
    "ReoptCache",
]

log = logging.getLogger(__name__)

COMPONENTS = ("lower_bound", "reoptimization", "transfer", "branch_and_generate")


@dataclass(frozen=True)
class SolverConfig:
    batch_size: int | str = 64
    time_limit: float = math.inf
    prune_slack: float = 1e-6
    relax_config: RelaxConfig = field(default_factory=RelaxConfig)
    memory_budget: int = 1 << 30
    profile: bool = True
    workers: int = 1
    trace: bool = False

    def __post_init__(self):
        if self.batch_size != "auto" and (not isinstance(self.batch_size, (int, np.integer))
                                          or self.batch_size < 1):
            raise ValueError(f"batch_size must be a positive int or 'auto', got {self.batch_size!r}")
        if self.prune_slack < 0:
            raise ValueError("prune_slack must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be > 0")

    def resolved_batch_size(self, instance) -> int:
        if self.batch_size == "auto":
            return auto_batch_size(self.memory_budget, instance.n, instance.p, instance.k,
                                   instance.loss)
        return int(self.batch_size)


@dataclass
class ComponentProfile:
    seconds: dict = field(default_factory=lambda: dict.fromkeys(COMPONENTS, 0.0))
    total: float = 0.0

    @property
    def percent(self) -> dict:
        tot = self.total if self.total > 0 else 1.0
        return {k: 100.0 * v / tot for k, v in self.seconds.items()}

    @property
    def accounted(self) -> float:
        return sum(self.seconds.values())

    def rows(self):
        pct = self.percent
        for name in COMPONENTS:
            yield name, self.seconds[name], pct[name]
        yield "total", self.total, 100.0


class _Timer:
    def __init__(self, profile: ComponentProfile, name: str):
        self.profile, self.name = profile, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.profile.seconds[self.name] += time.perf_counter() - self.t0


@dataclass
class Certificate:
    """Outcome of a certified solve.

    ``support`` is 0-based internally; the JSON form is 1-based and refers to
    the original column positions of the instance. Timings live in
    ``profile`` and are kept out of :meth:`to_dict` so the document is
    reproducible bit for bit.
    """

    optimal_value: float
    coefficients: np.ndarray
    support: tuple
    gap_percent: float
    nodes_processed: int
    lb_batches: int
    reopt_batches: int
    status: str
    lower_bound: float
    profile: ComponentProfile = field(default_factory=ComponentProfile)
    feature_index: np.ndarray | None = None
    batch_size: int = 1
    bound_trace: list = field(default_factory=list, repr=False)
    search_trace: list = field(default_factory=list, repr=False)

    @property
    def beta(self) -> np.ndarray:
        p = len(self.feature_index) if self.feature_index is not None else (
            max(self.support, default=-1) + 1)
        out = np.zeros(p)
        out[list(self.support)] = self.coefficients
        return out

    def to_dict(self) -> dict:
        idx = self.feature_index
        support = [int(idx[j]) + 1 if idx is not None else j + 1 for j in self.support]
        return {
            "optimal_value": float(self.optimal_value),
            "support": support,
            "coefficients": [float(c) for c in self.coefficients],
            "gap_percent": float(self.gap_percent),
            "nodes": int(self.nodes_processed),
            "batches": {"lb_batches": int(self.lb_batches),
                        "reopt_batches": int(self.reopt_batches)},
            "status": self.status,
        }

    def to_json(self) -> str:
        # repr-based float output round-trips exactly
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def profile_dict(self) -> dict:
        return {name: {"seconds": s, "percent": pc} for name, s, pc in self.profile.rows()}


class ReoptCache:
    """Re-optimisation results keyed by the sorted support."""

    def __init__(self, instance):
        self.instance = instance
        self._store: dict = {}
        self.calls = 0

    def __len__(self):
        return len(self._store)

    def evaluate(self, supports):
        """Coefficients aligned with each requested sequence, plus objectives."""
        keys = [tuple(sorted(s)) for s in supports]
        missing = list(dict.fromkeys(k for k in keys if k not in self._store))
        if missing:
            self.calls += 1
            coefs, objs = reoptimize_supports(missing, self.instance)
            for key, c, o in zip(missing, coefs, objs):
                self._store[key] = (c, float(o))
        out = []
        for seq, key in zip(supports, keys):
            c, o = self._store[key]
            pos = {j: r for r, j in enumerate(key)}
            out.append((tuple(int(j) for j in seq), c[[pos[j] for j in seq]], o))
        return out


def _gap_percent(ub: float, lb: float) -> float:
    if not math.isfinite(ub):
        return math.inf
    lb = min(lb, ub)
    return 100.0 * (ub - lb) / max(abs(ub), 1e-300) if ub != lb else 0.0


def solve(instance, config: SolverConfig | None = None, *, pool=None) -> Certificate:
    """Certified global minimiser of the cardinality-constrained problem.

    With ``pool`` (a :class:`~batchbnb.rashomon.RashomonPool`) the pruning
    threshold and the leaf handling follow the pool's rules and every
    evaluated model is offered to it.
    """
    config = config or SolverConfig()
    t_start = time.perf_counter()
    profile = ComponentProfile()
    batch_size = config.resolved_batch_size(instance)
    with _Timer(profile, "lower_bound"):
        L = smoothness_constant(instance.loss, instance.X)
        gram = gram_for(instance)
    p, k, M = instance.p, instance.k, instance.M
    cache = ReoptCache(instance)
    queue = NodeQueue()
    queue.push(root_node(p, k))
    nodes_processed = lb_batches = reopt_batches = 0
    bound_trace: list = []
    search_trace: list = []
    status = "optimal"

    def offer(evaluated):
        for seq, coefs, obj in evaluated:
            queue.update_incumbent(seq, coefs, obj)
            if pool is not None:
                pool.add(seq, coefs, obj, queue.upper_bound)

    def slack():
        return config.prune_slack * max(1.0, abs(queue.upper_bound))

    def threshold():
        if pool is not None:
            return pool.threshold(queue.upper_bound), True
        return queue.upper_bound - slack(), False

    def prunable(lb):
        tau, strict = threshold()
        return lb > tau if strict else lb >= tau

    while queue:
        with _Timer(profile, "transfer"):
            # the root batch always runs so that an incumbent exists
            if lb_batches and time.perf_counter() - t_start > config.time_limit:
                status = "time_limit"
                break
            tau, strict = threshold()
            batch, popped = assemble_batch(queue, batch_size, tau, strict=strict)
            nodes_processed += popped
            leaves = [nd for nd in batch if nd.is_leaf]
            inner = [nd for nd in batch if not nd.is_leaf]
        if not batch:
            continue
        lb_batches += 1

        # leaves: the best support of the subtree is known, evaluate directly
        if leaves:
            with _Timer(profile, "reoptimization"):
                before = cache.calls
                if pool is None:
                    offer(cache.evaluate([nd.leaf_support() for nd in leaves]))
                else:
                    pool.enumerate_leaves(leaves, cache, offer, lambda: threshold()[0])
                reopt_batches += cache.calls > before

        if not inner:
            with _Timer(profile, "transfer"):
                search_trace.append((lb_batches, queue.upper_bound, min(queue.global_lb, queue.upper_bound)))
            continue

        with _Timer(profile, "lower_bound"):
            tau, strict = threshold()
            prune_at = float(np.nextafter(tau, math.inf)) if strict else tau
            try:
                res = solve_batch_relaxation(inner, instance, config.relax_config, prune_at, L=L,
                                             gram=gram, workers=config.workers, trace=config.trace)
            except NumericalError as err:
                profile.total = time.perf_counter() - t_start
                err.profile = profile
                raise
            for col, it, dual, primal in res.trace:
                nd = inner[col]
                bound_trace.append((nd.fixed_zero, nd.fixed_one, dual))

        with _Timer(profile, "reoptimization"):
            meta = BatchMeta.from_nodes(inner)
            lbs = np.maximum(res.lower_bound, [nd.lower_bound for nd in inner])
            keep = [b for b, s in enumerate(res.status) if s != "prunable"]
            if keep:
                sub = meta.subset(keep)
                supports = round_supports(res.beta[:, keep], [inner[b] for b in keep], sub)
                before = cache.calls
                offer(cache.evaluate(supports))
                reopt_batches += cache.calls > before

        with _Timer(profile, "branch_and_generate"):
            if keep:
                js = select_branch_variables(res.beta[:, keep], meta.subset(keep))
                for b, j in zip(keep, js):
                    lb = float(lbs[b])
                    if prunable(lb):
                        continue
                    nd = inner[b]
                    parent = type(nd)(p=nd.p, k=nd.k, fixed_zero=nd.fixed_zero,
                                      fixed_one=nd.fixed_one, warm_start=nd.warm_start,
                                      lower_bound=lb, depth=nd.depth)
                    for child in branch(parent, int(j), res.beta[:, b], M):
                        queue.push(child)
            search_trace.append((lb_batches, queue.upper_bound, min(queue.global_lb, queue.upper_bound)))

    inc = queue.incumbent
    if status == "optimal":
        lower = inc.objective if inc is not None else math.inf
        gap = 0.0
    else:
        lower = min(queue.global_lb, queue.upper_bound)
        gap = _gap_percent(queue.upper_bound, lower)
    profile.total = time.perf_counter() - t_start
    if inc is None:
        raise RuntimeError("no feasible model was evaluated before termination")
    cert = Certificate(
        optimal_value=inc.objective, coefficients=inc.coefficients, support=inc.support,
        gap_percent=gap, nodes_processed=nodes_processed, lb_batches=lb_batches,
        reopt_batches=reopt_batches, status=status, lower_bound=lower, profile=profile,
        feature_index=np.asarray(instance.feature_index), batch_size=batch_size,
        bound_trace=bound_trace, search_trace=search_trace,
    )
    log.info("solve finished: value=%r gap=%r nodes=%d status=%s", cert.optimal_value,
             cert.gap_percent, nodes_processed, status)
    return cert


def node_memory(n: int, p: int, k: int, kind) -> tuple[int, int]:
    """Bytes per node for the bounding workspace and the re-optimisation arrays."""
    kind = LossKind.parse(kind)
    # B, Y, B_new, G, Q, U, sort keys, sorted output (p reals) + sort order
    # (p int64) + three masks; S, R, Z (n reals)
    m_lb = 8 * (8 * p + p) + 3 * p + 8 * 3 * n
    # gathered columns, Gram block, iterates and predictor
    m_reopt = 8 * (n * k + k * k + 4 * k + n)
    if kind is LossKind.LOGISTIC:
        m_reopt += 8 * 2 * n  # probabilities and derivative
    return m_lb, m_reopt


def auto_batch_size(memory_budget: float, n: int, p: int, k: int, kind) -> int:
    """Largest power of two with ``size * bytes_per_node <= 0.9 * memory_budget``."""
    if memory_budget <= 0:
        raise ValueError("memory_budget must be positive")
    m_node = sum(node_memory(n, p, k, kind))
    cap = int(0.9 * memory_budget // m_node)
    if cap < 1:
        return 1
    return 1 << (cap.bit_length() - 1)


def batch_size_sweep(instance, sizes, config: SolverConfig | None = None) -> list[dict]:
    """One certified solve per batch size; rows of (size, seconds, nodes, gap, value)."""
    config = config or SolverConfig()
    rows = []
    for size in sizes:
        cfg = SolverConfig(batch_size=int(size), time_limit=config.time_limit,
                           prune_slack=config.prune_slack, relax_config=config.relax_config,
                           memory_budget=config.memory_budget, profile=config.profile,
                           workers=config.workers)
        try:
            cert = solve(instance, cfg)
        except Exception as exc:  # keep sweeping; record the failure in the row
            log.error("batch size %d failed: %s", size, exc)
            rows.append({"batch_size": int(size), "seconds": math.nan, "nodes": -1,
                         "gap_percent": math.nan, "optimal_value": math.nan,
                         "status": f"error: {exc}"})
            continue
        rows.append({"batch_size": int(size), "seconds": cert.profile.total,
                     "nodes": cert.nodes_processed, "gap_percent": cert.gap_percent,
                     "optimal_value": cert.optimal_value, "status": cert.status})
    return rows
