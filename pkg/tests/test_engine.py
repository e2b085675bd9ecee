import json
import math

import numpy as np
import pytest

from batchbnb.engine import Certificate, SolverConfig, auto_batch_size, batch_size_sweep, node_memory, solve
from batchbnb.problem import ProblemInstance, generate_synthetic
from batchbnb.relaxation import NumericalError, RelaxConfig
from oracles import support_values


@pytest.mark.parametrize("loss", ["squared", "logistic"])
@pytest.mark.parametrize("seed", [0, 1])
@pytest.mark.parametrize("batch_size", [1, 8])
def test_matches_enumeration(loss, seed, batch_size):
    inst = generate_synthetic(25, 9, 3, loss=loss, seed=seed, M=2.0, lambda2=1.0)
    best = min(support_values(inst).values())
    cert = solve(inst, SolverConfig(batch_size=batch_size, prune_slack=0.0))
    assert cert.status == "optimal" and cert.gap_percent == 0.0
    assert cert.optimal_value == pytest.approx(best, abs=1e-6)
    assert len(cert.support) <= inst.k
    assert np.all(np.abs(cert.coefficients) <= inst.M)
    assert inst.objective(cert.beta) == pytest.approx(cert.optimal_value, rel=1e-12)


def test_zero_response():
    X = np.random.default_rng(0).normal(size=(20, 6))
    inst = ProblemInstance(X, np.zeros(20), "squared", 2, 1.0, 1.0)
    cert = solve(inst, SolverConfig(batch_size=4))
    assert cert.optimal_value == 0.0
    assert np.all(cert.beta == 0.0)
    assert cert.nodes_processed == 1


def test_k_equals_p_is_a_single_leaf():
    inst = generate_synthetic(20, 4, 4, seed=2)
    cert = solve(inst)
    assert cert.nodes_processed == 1
    assert cert.optimal_value == pytest.approx(support_values(inst)[(0, 1, 2, 3)], abs=1e-7)


def test_time_limit_still_certifies_something():
    inst = generate_synthetic(60, 40, 5, seed=0, lambda2=0.1)
    cert = solve(inst, SolverConfig(batch_size=2, time_limit=1e-9))
    assert cert.status == "time_limit"
    assert cert.lb_batches == 1
    assert math.isfinite(cert.optimal_value)
    assert 0.0 <= cert.gap_percent
    assert cert.lower_bound <= cert.optimal_value


def test_numerical_error_carries_profile(monkeypatch):
    import batchbnb.engine as engine

    def boom(*a, **kw):
        raise NumericalError("bad", 0)

    monkeypatch.setattr(engine, "solve_batch_relaxation", boom)
    with pytest.raises(NumericalError) as err:
        solve(generate_synthetic(20, 6, 2, seed=0))
    assert err.value.profile.total > 0


def test_certificate_json_and_profile():
    inst = generate_synthetic(30, 10, 3, seed=5)
    cert = solve(inst, SolverConfig(batch_size=4))
    doc = json.loads(cert.to_json())
    assert set(doc) == {"optimal_value", "support", "coefficients", "gap_percent", "nodes",
                        "batches", "status"}
    assert set(doc["batches"]) == {"lb_batches", "reopt_batches"}
    assert doc["support"] == [j + 1 for j in cert.support]
    assert doc["optimal_value"] == cert.optimal_value
    assert cert.to_json() == solve(inst, SolverConfig(batch_size=4)).to_json()
    prof = cert.profile
    assert abs(prof.accounted - prof.total) <= 0.05 * prof.total
    assert set(cert.profile_dict()) >= {"lower_bound", "reoptimization", "transfer",
                                        "branch_and_generate", "total"}


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(batch_size=0)
    with pytest.raises(ValueError):
        SolverConfig(prune_slack=-1.0)
    cfg = SolverConfig(batch_size="auto", memory_budget=1 << 20)
    assert cfg.resolved_batch_size(generate_synthetic(20, 10, 2, seed=0)) >= 1


def test_auto_batch_size_properties():
    sizes = [auto_batch_size(b, 300, 300, 8, "squared") for b in (1e3, 1e5, 1e7, 1e9)]
    assert sizes[0] == 1
    assert sizes == sorted(sizes)
    for b in (1e5, 1e7, 1e9):
        m = auto_batch_size(b, 300, 300, 8, "logistic")
        assert m & (m - 1) == 0
        per = sum(node_memory(300, 300, 8, "logistic"))
        assert m * per <= 0.9 * b or m == 1
        assert 2 * m * per > 0.9 * b
    with pytest.raises(ValueError):
        auto_batch_size(0, 10, 10, 2, "squared")


def test_sweep_rows():
    inst = generate_synthetic(30, 10, 3, seed=6)
    rows = batch_size_sweep(inst, [1, 4])
    assert [r["batch_size"] for r in rows] == [1, 4]
    assert rows[0]["optimal_value"] == pytest.approx(rows[1]["optimal_value"], abs=1e-6)
    assert all(r["status"] == "optimal" for r in rows)


def test_relax_config_passes_through():
    inst = generate_synthetic(30, 10, 3, seed=7)
    cfg = SolverConfig(relax_config=RelaxConfig(max_iterations=5), prune_slack=0.0)
    cert = solve(inst, cfg)
    # capped relaxations are still valid bounds, so the answer is still exact
    assert cert.optimal_value == pytest.approx(min(support_values(inst).values()), abs=1e-6)


def test_certificate_beta_uses_feature_count():
    cert = Certificate(1.0, np.array([2.0]), (1,), 0.0, 1, 1, 1, "optimal", 1.0,
                       feature_index=np.arange(4))
    assert cert.beta.tolist() == [0.0, 2.0, 0.0, 0.0]
