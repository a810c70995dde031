import math

import numpy as np
import pytest
from scipy import stats

from coagfrag import (HALVING, CoagKernel, DislocationMeasure, FragKernel, ParticleState,
                      SimConfig, coupling_bound, dist_dlambda, ensemble, make_rng, simulate,
                      simulate_coupled, step, total_rates)
from coagfrag.errors import DomainError

K1 = CoagKernel.constant(1.0)
K0 = CoagKernel.constant(0.0)
F1 = FragKernel.constant(1.0)
F0 = FragKernel.constant(0.0)
KSUM = CoagKernel.sum_power(1.0, 1.0)
KROOT = CoagKernel.sum_power(1.0, 0.5)


def test_total_rates_examples():
    assert total_rates((2, 1), K1, F1, HALVING) == (1.0, 2.0)
    assert total_rates((5,), KSUM, F1, HALVING)[0] == 0.0
    assert total_rates((), KSUM, F1, HALVING) == (0.0, 0.0)


def test_step_single_coalescence():
    dt, ev, new = step(ParticleState((1.0, 1.0)), K1, F0, HALVING, make_rng(1))
    assert (ev.kind, ev.i, ev.j_or_atom) == ("coalesce", 1, 2)
    assert new.masses == (2.0,)
    assert dt > 0


def test_step_single_fragmentation():
    _, ev, new = step(ParticleState((1.0,)), K0, F1, HALVING, make_rng(1))
    assert ev.kind == "fragment" and ev.i == 1
    assert new.masses == (0.5, 0.5)


def test_step_waiting_time_is_exponential():
    dts = [step(ParticleState((1.0, 1.0)), K1, F0, HALVING, make_rng(7, r))[0] for r in range(4000)]
    assert stats.kstest(dts, "expon").pvalue > 1e-3


def test_step_golden_first_event():
    m = ParticleState((2.0, 1.0, 1.0))
    for _ in range(3):
        dt, ev, new = step(m, KSUM, F1, HALVING, make_rng(12345))
        assert dt == 0.08896704191083567
        assert (ev.kind, ev.i, ev.j_or_atom) == ("coalesce", 1, 3)
        assert new.masses == (3.0, 1.0)


def test_first_event_probabilities():
    # pairs (1,2),(1,3),(2,3) have rates 3,3,2; each particle fragments at rate 1
    m = ParticleState((2.0, 1.0, 1.0))
    labels = [("coalesce", 1, 2), ("coalesce", 1, 3), ("coalesce", 2, 3),
              ("fragment", 1, 0), ("fragment", 2, 0), ("fragment", 3, 0)]
    counts = dict.fromkeys(labels, 0)
    n = 11000
    for r in range(n):
        _, ev, _ = step(m, KSUM, F1, HALVING, make_rng(99, r))
        counts[(ev.kind, ev.i, ev.j_or_atom)] += 1
    expected = np.array([3, 3, 2, 1, 1, 1]) / 11 * n
    assert stats.chisquare([counts[k] for k in labels], expected).pvalue > 1e-3


def test_pure_coalescence_absorbs():
    n = 8
    tr = simulate([1.0] * n, K1, F0, HALVING, SimConfig(t_max=math.inf, seed=2))
    assert tr.status == "absorbed"
    assert tr.n_events == n - 1
    assert tr.final_state.masses == (float(n),)


@pytest.mark.parametrize("engine", ["jit", "python"])
def test_engines_agree(engine):
    beta = DislocationMeasure(((1.0, (0.5, 0.3, 0.2)), (0.5, (0.6, 0.2))))
    ref = simulate([1.0] * 10, KROOT, F1, beta, SimConfig(t_max=5, seed=3, lam=0.5, engine="jit"))
    tr = simulate([1.0] * 10, KROOT, F1, beta, SimConfig(t_max=5, seed=3, lam=0.5, engine=engine))
    assert tr.n_events == ref.n_events
    assert np.array_equal(tr.times, ref.times)
    assert np.array_equal(tr.norm_lambda, ref.norm_lambda)
    assert tr.final_state.masses == ref.final_state.masses


def test_coupled_engines_agree():
    a = simulate_coupled([1.0] * 5, [1.0] * 4 + [1.1], KROOT, F1, HALVING,
                         SimConfig(t_max=2, seed=3, lam=0.5, engine="jit"))
    b = simulate_coupled([1.0] * 5, [1.0] * 4 + [1.1], KROOT, F1, HALVING,
                         SimConfig(t_max=2, seed=3, lam=0.5, engine="python"))
    assert np.array_equal(a.distance, b.distance)
    assert np.array_equal(a.who, b.who)


def test_expression_kernel_runs_on_python_engine():
    K = CoagKernel.from_expression("x + y", lam=1.0)
    tr = simulate([1.0] * 5, K, F1, HALVING, SimConfig(t_max=1, seed=1))
    ref = simulate([1.0] * 5, KSUM, F1, HALVING, SimConfig(t_max=1, seed=1))
    assert tr.final_state.masses == ref.final_state.masses
    with pytest.raises(DomainError):
        simulate([1.0] * 5, K, F1, HALVING, SimConfig(t_max=1, engine="jit"))


def test_mass_non_increasing_each_event():
    beta = DislocationMeasure.single((0.5, 0.3))
    tr = simulate([1.0] * 20, KROOT, F1, beta, SimConfig(t_max=3, seed=5, lam=0.5))
    assert np.all(np.diff(tr.mass_total) <= 1e-12 * tr.mass_total[0])


def test_budget_status():
    tr = simulate([1.0] * 4, K0, F1, HALVING, SimConfig(t_max=100, seed=1, max_events=50))
    assert tr.status == "budget" and tr.budget_exceeded
    assert tr.n_events == 50


def test_branching_mean():
    cfg = SimConfig(t_max=1.0, seed=11, record_mode="none")
    res = ensemble([1.0], K0, F1, HALVING, cfg, replicas=10_000)
    s = res.stats["final_n_particles"]
    assert abs(s.mean - math.e) < 3 * s.stderr


def test_ensemble_single_replica_equals_simulate():
    cfg = SimConfig(t_max=2, seed=4, lam=0.5)
    res = ensemble([1.0] * 6, KROOT, F1, HALVING, cfg, replicas=1)
    tr = simulate([1.0] * 6, KROOT, F1, HALVING, cfg)
    assert res.per_replica["events"][0] == tr.n_events
    assert res.per_replica["final_mass"][0] == tr.final_state.total_mass
    assert res.per_replica["sup_norm_lambda"][0] == tr.sup_norm_lambda


def test_ensemble_deterministic():
    cfg = SimConfig(t_max=1, seed=8, lam=0.5, record_mode="none")
    a = ensemble([1.0] * 5, KROOT, F1, HALVING, cfg, replicas=50)
    b = ensemble([1.0] * 5, KROOT, F1, HALVING, cfg, replicas=50)
    assert a.to_json() == b.to_json()


def test_conserved_norm_bound():
    cfg = SimConfig(t_max=1.0, seed=2, lam=1.0, record_mode="none")
    res = ensemble([1.0], K0, F1, HALVING, cfg, replicas=500)
    assert np.all(res.per_replica["sup_norm_lambda"] <= math.exp(0.5) + 1e-12)


def test_coupled_identical_start():
    ct = simulate_coupled([1.0, 1.0, 0.5], [1.0, 1.0, 0.5], KSUM, F1, HALVING,
                          SimConfig(t_max=2, seed=5))
    assert np.all(ct.distance == 0)
    assert np.all(ct.who == 0)


def test_coupled_no_events():
    ct = simulate_coupled([1.0, 1.0], [1.0, 1.1], K0, F0, HALVING, SimConfig(t_max=2, seed=5))
    assert ct.n_events == 0
    assert np.all(ct.distance == dist_dlambda((1.0, 1.0), (1.1, 1.0), 1.0))


def test_coupling_bound_mean():
    eps = 1e-3
    K = CoagKernel.sum_power(1.0, 1.0, holder_kappa=((3.0, 1.0),))
    cfg = SimConfig(t_max=1.0, seed=21, lam=1.0, tau_cap=3.0, record_mode="none")
    m0, mt0 = (1.0, 1.0), (1.0 + eps, 1.0)
    b = coupling_bound(m0, mt0, K, F1, HALVING, 1.0, 3.0, 1.0)
    res = ensemble(m0, K, F1, HALVING, cfg, replicas=1000, mt0=mt0)
    s = res.stats["sup_distance"]
    assert s.mean < b.bound
