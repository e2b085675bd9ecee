"""Worked values and small derived checks, one per documented example."""

import json
import math

import numpy as np
import pytest

from batchbnb.cli import main
from batchbnb.engine import auto_batch_size
from batchbnb.heuristics import (recover_indicators, reoptimize_supports, round_support,
                                 select_branch_variable)
from batchbnb.nodes import NodeState, branch, root_node
from batchbnb.partitioned import partition_rows, partitioned_batch_eval
from batchbnb.problem import ProblemInstance, generate_synthetic, preprocess, true_support
from batchbnb.prox import (BatchMeta, batched_conjugate_prox, g_conjugate_value, g_value, prox_huber,
                           prox_step)
from batchbnb.relaxation import (BatchWorkspace, RelaxConfig, batched_gradient, dual_bounds,
                                 solve_batch_relaxation)
from oracles import box_ridge_exact, conj_prox_grid, g_conjugate_direct


def test_uncorrelated_design_covariance():
    inst = generate_synthetic(10**4, 10, 1, correlation=0.0, seed=0)
    C = np.cov(inst.X, rowvar=False)
    assert np.linalg.norm(C - np.eye(10)) < 0.1


def test_planted_support_positions():
    assert (true_support(1000, 10) + 1).tolist() == list(range(100, 1001, 100))


def test_preprocess_small_column():
    inst = ProblemInstance(np.array([[1.0], [2.0], [3.0]]), np.zeros(3), "squared", 1, 1.0, 1.0)
    col = preprocess(inst).X[:, 0]
    assert np.allclose(col, [-1 / math.sqrt(2), 0.0, 1 / math.sqrt(2)], atol=1e-15)


def test_node_bookkeeping_examples():
    assert root_node(6, 2).free.size == 6
    node = root_node(20, 3)
    beta = np.zeros(20)
    for j in (18, 2, 7):
        _, node = branch(node, j, beta)
    assert node.fixed_one == (18, 2, 7)
    assert set(node.fixed_one) == {2, 7, 18}


def test_scalar_huber_prox():
    assert prox_huber(1.0, 1.0, 2.0) == 0.5
    assert prox_huber(10.0, 1.0, 2.0) == 8.0


def test_conjugate_prox_pooling_example():
    meta = BatchMeta.from_node(NodeState(2, 1))
    out = batched_conjugate_prox(np.array([[1.0], [1.2]]), meta, 1.0, 2.0)[:, 0]
    assert out == pytest.approx([1.1 / 1.5, 1.1 / 1.5], abs=1e-15)
    ref = conj_prox_grid([1.0, 1.2], (), (), 1, 1.0, 2.0)
    assert np.max(np.abs(out - ref)) < 1e-6


def test_prox_step_against_conjugate_grid():
    # prox_{t g}(u) = u - t prox_{g*/t}(u/t), the right side by grid search
    rng = np.random.default_rng(12)
    for _ in range(6):
        k = int(rng.integers(1, 4))
        node = NodeState(4, k, fixed_zero=(int(rng.integers(0, 4)),)) if rng.random() < 0.5 else NodeState(4, k)
        U = rng.normal(size=4) * 2
        eta, lam, M = 0.3, 0.8, 1.5
        t = 2 * eta * lam
        B = prox_step(U[:, None], eta, lam, BatchMeta.from_node(node), M)[:, 0]
        a = conj_prox_grid(U / t, node.fixed_zero, node.fixed_one, k, 1.0 / t, M)
        assert np.max(np.abs(B - (U - t * a))) <= 1e-5


def test_g_binding_example():
    assert g_value([2.0, 1.0, 0.5, 0.25], NodeState(4, 2), M=2.0) == pytest.approx(3.53125, abs=1e-15)


def test_g_conjugate_example():
    node = NodeState(3, 2, fixed_one=(0,))
    q = [3.0, 0.5, 2.0]
    assert g_conjugate_value(q, node, M=1.0) == 4.0
    assert g_conjugate_direct(q, (), (0,), 2, 1.0) == 4.0


def test_recovery_example():
    rec = recover_indicators([2.0, 1.0, 0.5, 0.25], NodeState(4, 2), M=2.0)
    assert rec.cap_count == 1 and rec.tau == 1.75
    assert rec.z == pytest.approx([1.0, 4 / 7, 2 / 7, 1 / 7], abs=1e-15)
    assert rec.z.sum() == pytest.approx(2.0, abs=1e-15)
    assert round_support([2.0, 1.0, 0.5, 0.25], NodeState(4, 2)) == (0, 1)


def test_branching_agrees_with_recovered_indicators():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        p = int(rng.integers(2, 11))
        k = int(rng.integers(1, p))
        node = NodeState(p, k, fixed_one=tuple(int(j) for j in rng.permutation(p)[:int(rng.integers(0, k))]))
        M = 2.0
        beta = rng.uniform(-M, M, size=p)
        used = np.abs(beta[node.free]).sum() / M
        if used > node.kbar:
            beta[node.free] *= node.kbar / used
        j = select_branch_variable(beta, node)
        z = recover_indicators(beta, node, M=M).z
        assert z[j] == z[node.free].max()
        assert select_branch_variable(3.7 * beta, node) == j


def test_gradient_finite_differences():
    inst = generate_synthetic(8, 5, 2, loss="logistic", seed=1)
    beta = np.random.default_rng(0).normal(size=5)
    G = batched_gradient(beta[:, None], inst)[:, 0]
    h = 1e-6
    for j in range(5):
        e = np.zeros(5)
        e[j] = h
        f = lambda b: np.sum(np.logaddexp(0.0, -inst.y * (inst.X @ b)))
        assert (f(beta + e) - f(beta - e)) / (2 * h) == pytest.approx(G[j], abs=1e-6)


def test_dual_bound_at_zero_by_hand():
    inst = generate_synthetic(12, 4, 2, seed=2, lambda2=0.7)
    node = NodeState(4, 2, fixed_one=(1,))
    meta = BatchMeta.from_node(node)
    ws = BatchWorkspace(B=np.zeros((4, 1)))
    batched_gradient(ws.B, inst, ws)
    psi = dual_bounds(ws, meta, inst)[0]
    y = inst.y
    q = inst.X.T @ y / (2 * 0.7)
    hand = -np.sum(0.5 * y**2 - y**2) - 2 * 0.7 * g_conjugate_direct(q, (), (1,), 2, inst.M)
    assert psi == pytest.approx(hand, rel=1e-13)


def test_root_relaxation_is_box_ridge_when_k_covers_p():
    inst = generate_synthetic(20, 4, 4, seed=5, M=0.6, lambda2=0.3)
    res = solve_batch_relaxation([root_node(4, 4)], inst, RelaxConfig(gap_tolerance=1e-12, max_iterations=20000))
    _, ref = box_ridge_exact(inst.X, inst.y, 0.3, 0.6)
    assert res.primal[0] == pytest.approx(ref, abs=1e-6)
    assert res.lower_bound[0] == pytest.approx(ref, abs=1e-6)


def test_reoptimization_reaches_least_squares():
    inst = generate_synthetic(30, 6, 6, seed=8, M=1e6, lambda2=1e-10)
    coefs, _ = reoptimize_supports([tuple(range(6)), tuple(range(6))], inst, tol=1e-10, max_iter=100000)
    beta = coefs[0]
    assert np.linalg.norm(inst.X.T @ (inst.X @ beta - inst.y)) <= 1e-4
    assert np.array_equal(coefs[0], coefs[1])


def test_empty_support_objective():
    inst = generate_synthetic(10, 3, 1, loss="logistic", seed=0)
    coefs, objs = reoptimize_supports([()], inst)
    assert coefs[0].size == 0 and objs[0] == pytest.approx(10 * math.log(2), rel=1e-14)


def test_logistic_batches_are_no_larger():
    for budget in (1e6, 1e8, 2**34):
        sq = auto_batch_size(budget, 1000, 500, 10, "squared")
        lg = auto_batch_size(budget, 1000, 500, 10, "logistic")
        assert lg <= sq
        assert auto_batch_size(2 * budget, 1000, 500, 10, "squared") <= 2 * sq


def test_partition_identity_and_four_groups():
    inst = generate_synthetic(50, 9, 3, loss="logistic", seed=4, lambda2=0.4)
    B = np.random.default_rng(1).normal(size=(9, 3))
    G, Q, _, _ = partitioned_batch_eval(B, partition_rows(inst, 4), inst)
    ref = partitioned_batch_eval(B, partition_rows(inst, 1), inst)
    assert np.max(np.abs(G - ref[0])) <= 1e-10
    assert np.allclose(G, -2 * 0.4 * Q, atol=1e-14)


@pytest.mark.slow
def test_cli_desk_scale_solve(tmp_path):
    # about 2.4e5 nodes; a few minutes on one core
    out = tmp_path / "c.json"
    code = main(["solve", "--gen", "n=200,p=100,k=10,rho=0.9,loss=squared,seed=1",
                 "--k", "10", "--M", "2", "--lambda2", "1", "--batch-size", "256", "--out", str(out)])
    assert code == 0
    assert json.loads(out.read_text())["gap_percent"] == 0
