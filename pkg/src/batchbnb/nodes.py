"""Branch-and-bound nodes, the open-node queue and batch assembly."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NodeState",
    "NodeQueue",
    "Incumbent",
    "root_node",
    "branch",
    "assemble_batch",
    "budget_usage",
]


@dataclass(frozen=True, eq=False)
class NodeState:
    """Partial fixing of the support indicators.

    ``fixed_one`` keeps the order in which indices were fixed to one; that
    order is reused as the insertion sequence when Rashomon supports are
    stored. The free set is the complement of ``fixed_zero | fixed_one``.
    """

    p: int
    k: int
    fixed_zero: tuple = ()
    fixed_one: tuple = ()
    warm_start: np.ndarray = field(default=None)  # type: ignore[assignment]
    lower_bound: float = -math.inf
    depth: int = 0

    def __post_init__(self):
        zero, one = set(self.fixed_zero), set(self.fixed_one)
        if zero & one:
            raise ValueError(f"indices fixed both ways: {sorted(zero & one)}")
        if len(self.fixed_one) > self.k:
            raise ValueError("more indices fixed to one than the budget k")
        if len(one) != len(self.fixed_one) or len(zero) != len(self.fixed_zero):
            raise ValueError("duplicate fixed indices")
        ws = np.zeros(self.p) if self.warm_start is None else np.array(self.warm_start, dtype=float)
        ws.setflags(write=False)
        object.__setattr__(self, "warm_start", ws)

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.p, dtype=bool)
        mask[list(self.fixed_zero)] = False
        mask[list(self.fixed_one)] = False
        return np.flatnonzero(mask)

    @property
    def kbar(self) -> int:
        return self.k - len(self.fixed_one)

    @property
    def n_free(self) -> int:
        return self.p - len(self.fixed_zero) - len(self.fixed_one)

    @property
    def is_leaf(self) -> bool:
        """No branching left: the node's best support is ``J1 | Jf`` itself."""
        return self.kbar == 0 or self.kbar >= self.n_free

    def leaf_support(self) -> tuple:
        if self.kbar <= 0:
            return tuple(self.fixed_one)
        return tuple(self.fixed_one) + tuple(int(j) for j in self.free)


def budget_usage(beta, node: NodeState, M: float) -> float:
    """``sum_{j free} |beta_j| / M``; the node domain needs this to be <= kbar."""
    beta = np.asarray(beta, dtype=float)
    return float(np.abs(beta[node.free]).sum() / M)


def root_node(p: int, k: int) -> NodeState:
    return NodeState(p=p, k=k)


def branch(node: NodeState, j: int, relaxed_beta, M: float = math.inf):
    """Split ``node`` on free index ``j`` into the ``z_j = 0`` and ``z_j = 1`` children.

    Both children inherit ``relaxed_beta`` as warm start and the parent's
    certified bound. A one-child that exhausts the budget moves every
    remaining free index to ``J0``.
    """
    j = int(j)
    if j in node.fixed_zero or j in node.fixed_one or not 0 <= j < node.p:
        raise ValueError(f"index {j} is not free at this node")
    beta = np.array(relaxed_beta, dtype=float)
    bound = node.lower_bound

    ws0 = beta.copy()
    ws0[j] = 0.0
    ws0[list(node.fixed_zero)] = 0.0
    child0 = NodeState(
        p=node.p, k=node.k, fixed_zero=node.fixed_zero + (j,), fixed_one=node.fixed_one,
        warm_start=ws0, lower_bound=bound, depth=node.depth + 1,
    )

    one = node.fixed_one + (j,)
    zero = node.fixed_zero
    ws1 = beta.copy()
    ws1[list(zero)] = 0.0
    if len(one) == node.k:
        rest = tuple(int(i) for i in node.free if i != j)
        zero = zero + rest
        ws1[list(rest)] = 0.0
    child1 = NodeState(
        p=node.p, k=node.k, fixed_zero=zero, fixed_one=one,
        warm_start=ws1, lower_bound=bound, depth=node.depth + 1,
    )
    if math.isfinite(M):
        child1 = _restore_budget(child1, M)
    return child0, child1


def _restore_budget(node: NodeState, M: float) -> NodeState:
    ws = np.array(node.warm_start)
    free = node.free
    used = np.abs(ws[free]).sum() / M
    if node.kbar <= 0:
        ws[free] = 0.0
    elif used > node.kbar:
        ws[free] *= node.kbar / used
    else:
        return node
    return NodeState(
        p=node.p, k=node.k, fixed_zero=node.fixed_zero, fixed_one=node.fixed_one,
        warm_start=ws, lower_bound=node.lower_bound, depth=node.depth,
    )


@dataclass
class Incumbent:
    support: tuple
    coefficients: np.ndarray
    objective: float


class NodeQueue:
    """Best-bound-first queue; ties go to the earlier insertion."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.incumbent: Incumbent | None = None

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, node: NodeState) -> None:
        heapq.heappush(self._heap, (node.lower_bound, next(self._seq), node))

    def pop(self) -> NodeState:
        return heapq.heappop(self._heap)[2]

    @property
    def global_lb(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    @property
    def upper_bound(self) -> float:
        return math.inf if self.incumbent is None else self.incumbent.objective

    def update_incumbent(self, support, coefficients, objective: float) -> bool:
        if objective < self.upper_bound:
            support = np.asarray(support, dtype=np.int64)
            order = np.argsort(support, kind="stable")
            coefficients = np.asarray(coefficients, dtype=float)[order]
            self.incumbent = Incumbent(tuple(int(j) for j in support[order]),
                                       coefficients, float(objective))
            return True
        return False


def assemble_batch(queue: NodeQueue, batch_size: int, threshold: float, *,
                   strict: bool = False):
    """Pop up to ``batch_size`` open nodes in queue order.

    Nodes whose stored bound reaches ``threshold`` (``>=``, or ``>`` when
    ``strict``) are discarded for good. Returns ``(batch, n_popped)`` where
    ``n_popped`` also counts the discarded nodes.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batch: list[NodeState] = []
    popped = 0
    while queue and len(batch) < batch_size:
        node = queue.pop()
        popped += 1
        lb = node.lower_bound
        if (lb > threshold) if strict else (lb >= threshold):
            continue
        batch.append(node)
    return batch, popped
