import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coagfrag import CoagKernel, DomainError, FragKernel, SampleGrid, ineq_constant
from coagfrag import verify_coag_hypothesis, verify_frag_hypothesis, verify_holder_hypothesis

masses = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


def test_product_sum_value():
    K = CoagKernel.product_sum(0.0, 1.0)
    assert K(2, 3) == 5.0


@pytest.mark.parametrize("K", [
    CoagKernel.constant(2.0),
    CoagKernel.sum_power(1.0, 0.5),
    CoagKernel.product_sum(0.3, 0.4),
    CoagKernel.geometric(1.0, 0.5),
    CoagKernel.difference(0.5, 1.0, 0.2),
])
def test_zero_mass_convention(K):
    assert K(2, 0) == 0.0
    assert K(0, 2) == 0.0


def test_sum_power_symmetric():
    K = CoagKernel.sum_power(1.0, 1.0)
    assert K(2, 3) == 5.0 == K(3, 2)


@given(masses, masses)
def test_kernels_symmetric(x, y):
    for K in (CoagKernel.sum_power(1.0, 0.5), CoagKernel.product_sum(0.3, 0.4),
              CoagKernel.geometric(1.0, 0.5), CoagKernel.difference(0.5, 1.0, 0.2)):
        assert K(x, y) == K(y, x)


def test_derived_lambda():
    assert CoagKernel.sum_power(1.0, 0.5).lam == 0.5
    assert CoagKernel.product_sum(0.3, 0.4).lam == pytest.approx(0.7)
    assert CoagKernel.geometric(1.0, 0.5).lam == 0.5


def test_lambda_outside_range_rejected():
    with pytest.raises(DomainError):
        CoagKernel.product_sum(1.0, 1.0)
    with pytest.raises(DomainError):
        CoagKernel.sum_power(2.0, 1.0)


def test_frag_values():
    assert FragKernel.constant(1.0).values(np.array([5.0]))[0] == 1.0
    assert FragKernel.inverse_linear(1.0).values(np.array([1.0]))[0] == 0.5
    for F in (FragKernel.constant(1.0), FragKernel.inverse_linear(1.0), FragKernel.power(1.0)):
        assert F.values(np.array([0.0]))[0] == 0.0


def test_unbounded_frag_not_on_deterministic_track():
    assert FragKernel.constant(1.0).deterministic_track
    assert not FragKernel.power(1.0).deterministic_track
    with pytest.raises(DomainError):
        FragKernel.power(1.0, deterministic_track=True)


def test_matrix_matches_scalar():
    K = CoagKernel.sum_power(1.0, 0.5)
    x = np.array([0.5, 1.0, 3.0])
    M = K.matrix(x)
    for a in range(3):
        for b in range(3):
            assert M[a, b] == pytest.approx(K(x[a], x[b]), rel=1e-15)


def test_expression_kernel():
    K = CoagKernel.from_expression("(x + y) ** a", lam=0.5, params={"a": 0.5})
    assert K(1, 3) == pytest.approx(2.0)
    assert K(1, 0) == 0.0
    with pytest.raises(DomainError):
        CoagKernel.from_expression("__import__('os')", lam=0.5)


def test_truncated_cap():
    K = CoagKernel.sum_power(1.0, 1.0).truncated(3)
    assert K(2, 2) == 3.0
    assert K(1, 1) == 2.0


def test_json_roundtrip():
    K = CoagKernel.sum_power(1.0, 0.5, kappa0=1.0, kappa1=0.5, holder_kappa=((4.0, 2.0),))
    K2 = CoagKernel.from_json(K.to_json())
    assert K2.to_json() == K.to_json()
    F = FragKernel.inverse_linear(2.0)
    assert FragKernel.from_json(F.to_json()).to_json() == F.to_json()


def test_coag_hypothesis_equality_case():
    rep = verify_coag_hypothesis(CoagKernel.sum_power(1.0, 0.5, kappa0=1.0, kappa1=0.5))
    assert rep.ok, rep.violations[:3]


def test_coag_hypothesis_counterexample():
    K = CoagKernel.from_expression("x * y", lam=1.0, kappa0=1.0, kappa1=1.0)
    rep = verify_coag_hypothesis(K, SampleGrid(extra=(10.0,)))
    assert not rep.ok
    pts = [tuple(v.point) for v in rep.violations if v.check == "growth"]
    assert (10.0, 10.0) in pts


def test_coag_hypothesis_product_sum_fixture():
    K = CoagKernel.product_sum(0.3, 0.4, kappa0=2.0, kappa1=2.0)
    rep = verify_coag_hypothesis(K)
    assert not [v for v in rep.violations if v.check == "growth"]
    assert rep.max_ratio["growth"] <= 2.0


def test_frag_hypothesis():
    assert verify_frag_hypothesis(FragKernel.constant(1.0)).ok
    assert verify_frag_hypothesis(FragKernel.inverse_linear(1.0)).ok
    bad = FragKernel.power(1.0, kappa2=1.0, kappa3=1.0)
    rep = verify_frag_hypothesis(bad, SampleGrid(extra=(2.0,)))
    assert not rep.ok
    assert any(v.point == (2.0,) or v.point == 2.0 for v in rep.violations)


def test_holder_hypothesis():
    K = CoagKernel.sum_power(1.0, 1.0, holder_kappa=((10.0, 1.0),))
    F = FragKernel.constant(1.0)
    assert verify_holder_hypothesis(K, F, 10.0).ok


def test_ineq_constant():
    assert ineq_constant(0.0, 0.5) == 1.0
    c = ineq_constant(0.5, 0.5)
    assert 1.0 <= c < 10.0
    assert math.isfinite(ineq_constant(1.0, 1.0))
