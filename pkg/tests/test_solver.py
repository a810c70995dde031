import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coagfrag import (HALVING, AtomicMeasure, CoagKernel, FragKernel, GridPolicy, SolveConfig,
                      StabilityViolation, apply_generator, c_beta_lambda, moment,
                      moment_bound_check, pairing, primitive, rebin, solve_euler, solve_picard,
                      sup_tv, truncation_cauchy_check, uniqueness_distance)
from coagfrag.solver import truncate_kernel

K0 = CoagKernel.constant(0.0)
K1 = CoagKernel.constant(1.0)
F0 = FragKernel.constant(0.0)
F1 = FragKernel.constant(1.0)
FIXED = GridPolicy(kind="fixed", cap=64)
GEOM = GridPolicy(ratio=2 ** 0.25, x_min=2.0 ** -40, x_max=2.0 ** 10)


def test_moment_examples():
    c = AtomicMeasure.from_dict({2.0: 3.0})
    assert moment(c, 1.0) == 6
    assert moment(c, 0.0) == 3
    assert moment(AtomicMeasure.empty(), 0.5) == 0


def test_primitive_examples():
    c = AtomicMeasure.from_dict({1.0: 2.0, 3.0: 1.0})
    assert primitive(c, 2.0) == 1
    assert primitive(c, 1.0) == 1
    assert primitive(c, 4.0) == 0


def test_pairing():
    c = AtomicMeasure.from_dict({1.0: 2.0, 3.0: 1.0})
    assert pairing(lambda x: x * x, c) == 11


def test_uniqueness_distance_examples():
    c, d = AtomicMeasure.from_dict({1.0: 1.0}), AtomicMeasure.from_dict({2.0: 1.0})
    assert uniqueness_distance(c, d, 1.0) == pytest.approx(1.0)
    assert uniqueness_distance(c, c, 0.5) == 0
    assert uniqueness_distance(c, d, 0.5) == pytest.approx((2 ** 0.5 - 1) / 0.5, rel=1e-12)


def test_measure_rejects_negative_weights():
    with pytest.raises(ValueError):
        AtomicMeasure(np.array([1.0]), np.array([-1.0]))


@given(st.dictionaries(st.floats(1e-3, 500), st.floats(0, 10), min_size=1, max_size=20))
def test_rebin_conserves_number_and_mass(atoms):
    c = AtomicMeasure.from_dict(atoms)
    pts = GridPolicy(ratio=2 ** 0.5, x_min=1e-3, x_max=1024).build(c)
    w = rebin(c, pts)
    assert np.all(w >= 0)
    assert math.isclose(w.sum(), c.weights.sum(), rel_tol=1e-12, abs_tol=1e-300)
    assert math.isclose(w @ pts, c.weights @ c.support, rel_tol=1e-12, abs_tol=1e-300)


def test_generator_examples():
    assert apply_generator(AtomicMeasure.from_dict({1.0: 1.0}), K0, F0, HALVING, [1.0, 2.0]).as_dict() == {}
    g = apply_generator(AtomicMeasure.from_dict({2.0: 1.0}), K0, F1, HALVING, [1.0, 2.0])
    assert g.as_dict() == {1.0: 2.0, 2.0: -1.0}
    n = 3.0
    g = apply_generator(AtomicMeasure.from_dict({1.0: n}), K1, F0, HALVING, GridPolicy(kind="fixed", cap=4))
    assert g.weights.sum() == pytest.approx(-n * n / 2)


def test_euler_constant_kernel_oracle():
    tr = solve_euler(AtomicMeasure.from_dict({1.0: 1.0}), K1, F0, HALVING, SolveConfig(dt=1e-3, t_max=1), FIXED)
    assert tr.M0[-1] == pytest.approx(2 / 3, rel=1e-2)
    assert np.all(tr.weights >= 0)


def test_halving_oracle():
    tr = solve_euler(AtomicMeasure.from_dict({1.0: 1.0}), K0, F1, HALVING, SolveConfig(dt=1e-3, t_max=1), GEOM)
    assert tr.M0[-1] == pytest.approx(math.e, rel=1e-2)
    assert np.max(np.abs(tr.M1 / tr.M1[0] - 1)) <= 1e-9


def test_trivial_dynamics_constant():
    c0 = AtomicMeasure.from_dict({1.0: 0.5, 4.0: 2.0})
    for solver in (solve_euler, solve_picard):
        tr = solver(c0, K0, F0, HALVING, SolveConfig(dt=0.1, t_max=1), FIXED)
        assert tr.final.as_dict() == c0.as_dict()
    assert solve_picard(c0, K0, F0, HALVING, SolveConfig(dt=0.1, t_max=1), FIXED).iterations == 1


def test_stability_guard():
    c0 = AtomicMeasure.from_dict({1.0: 100.0})
    with pytest.raises(StabilityViolation) as err:
        solve_euler(c0, K1, F0, HALVING, SolveConfig(dt=0.1, t_max=1), FIXED)
    assert 0 < err.value.suggested_dt < 0.1


def test_picard_matches_euler():
    c0 = AtomicMeasure.from_dict({1.0: 1.0})
    e = solve_euler(c0, K1, F0, HALVING, SolveConfig(dt=1e-3, t_max=1), FIXED)
    p = solve_picard(c0, K1, F0, HALVING, SolveConfig(dt=1e-3, t_max=1, scheme="picard"), FIXED)
    assert sup_tv(e, p) <= 2e-3
    assert p.min_weight >= 0


def test_moment_bound_pure_coagulation():
    c0 = AtomicMeasure.from_dict({1.0: 1.0, 2.0: 0.5})
    tr = solve_euler(c0, CoagKernel.sum_power(1.0, 0.5), F0, HALVING,
                     SolveConfig(dt=1e-3, t_max=1, lam=0.5), FIXED)
    assert np.all(np.diff(tr.M_lambda) <= 1e-12)
    assert moment_bound_check(tr, 0.5, 0.0, c_beta_lambda(HALVING, 0.5)).ok


def test_moment_bound_halving_growth_rate():
    tr = solve_euler(AtomicMeasure.from_dict({1.0: 1.0}), K0, F1, HALVING,
                     SolveConfig(dt=1e-3, t_max=1, lam=0.5), GEOM)
    rate = 2 * 0.5 ** 0.5 - 1
    assert tr.M_lambda[-1] == pytest.approx(math.exp(rate), rel=1e-2)
    assert moment_bound_check(tr, 0.5, 1.0, c_beta_lambda(HALVING, 0.5)).ok


def test_truncate_kernel():
    K = CoagKernel.sum_power(1.0, 1.0)
    assert truncate_kernel(K, 3)(2, 2) == 3
    xs = np.geomspace(1e-2, 1e2, 15)
    for x in xs:
        for y in xs:
            assert truncate_kernel(K, 4)(x, y) <= truncate_kernel(K, 5)(x, y) <= K(x, y)
    assert truncate_kernel(K, 1e9)(3, 4) == K(3, 4)


def test_truncation_single_level_empty():
    c0 = AtomicMeasure.from_dict({1.0: 1.0})
    tab = truncation_cauchy_check(c0, K1, F0, HALVING, SolveConfig(dt=0.01, t_max=0.1), FIXED, [4])
    assert tab.distances == []


def test_truncation_saturated_levels():
    c0 = AtomicMeasure.from_dict({1.0: 1.0})
    tab = truncation_cauchy_check(c0, K1, F0, HALVING, SolveConfig(dt=0.01, t_max=0.5), FIXED, [4, 8, 16])
    assert tab.distances == [0.0, 0.0]
