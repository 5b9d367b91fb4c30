import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multitime.errors import DimensionError, ParameterError
from multitime.family import (
    CSV_HEADER_TAIL,
    HamiltonianFamily,
    box_grid,
    check_commutation,
    check_curl,
    check_zero_curvature,
    reports_to_csv,
    scan_family,
)
from multitime.models import (
    FourStateParams,
    GaudinParams,
    TCParams,
    four_state_family,
    gaudin_family,
    lz_two_state,
    tavis_cummings_family,
)

from oracles import SX, SY, four_state_h0, four_state_h1

P = FourStateParams()


def broken_four_state():
    """Four-state family with the sign of one g-coupling in H1 flipped."""

    def gen(j, x):
        if j == 0:
            return four_state_h0(1, 0.5, 0.2, 0.3, x[0], x[1])
        h = four_state_h1(1, 0.5, 0.2, 0.3, x[0], x[1])
        h[0, 2] = h[2, 0] = -h[0, 2]
        return h

    return HamiltonianFamily("broken", 2, 4, gen)


def constant_pauli_family():
    return HamiltonianFamily("pauli", 2, 2, lambda j, x: SX if j == 0 else SY, lambda j, k, x: np.zeros((2, 2)), real_valued=False)


def test_commutation_same_index_is_zero():
    f = four_state_family(P)
    assert check_commutation(f, (0.3, 0.1), 1, 1) == 0.0
    with pytest.raises(ParameterError):
        check_commutation(f, (0.3, 0.1), 2, 2)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(-50, 50), e=st.floats(-50, 50))
def test_four_state_commutes_everywhere(t, e):
    assert check_commutation(four_state_family(P), (t, e), 0, 1) < 1e-12 * max(1.0, abs(t), abs(e))


def test_broken_family_detected():
    assert check_commutation(broken_four_state(), (1.0, 1.0), 0, 1) > 1e-3
    worst = scan_family(broken_four_state(), box_grid([-3, -3], [3, 3], 4))
    assert worst[(0, 1)].full_curvature_norm > 1e-3
    assert len(worst[(0, 1)].point) == 2


def test_four_state_curl_is_exactly_zero_with_analytic_partials():
    assert check_curl(four_state_family(P), (0.4, -2.0), 0, 1) == 0.0


def test_single_generator_family_is_flat():
    f = lz_two_state(0.5, 0.2)
    r = check_zero_curvature(f, (3.0,), 0, 0)
    assert r.full_curvature_norm == r.curl_norm == r.commutator_norm == 0.0
    assert scan_family(f, [np.array([1.0])]) == {}


def test_tavis_cummings_mixed_curl():
    f = tavis_cummings_family(TCParams(2, (1.0, 0.4), 0.3, 3))
    x = (0.2, 1.0, 0.4)
    # d_omega H_1 = s_1^z = d_eps1 H_TC
    assert np.array_equal(f.derivative(1, 0, x), f.derivative(0, 1, x))
    assert check_curl(f, x, 1, 0) < 1e-12
    assert check_curl(f, x, 1, 0, "central") < 1e-8


def test_four_state_random_points():
    f = four_state_family(P)
    rng = np.random.default_rng(0)
    for x in rng.uniform(-5, 5, size=(20, 2)):
        assert check_zero_curvature(f, x, 0, 1, "central").full_curvature_norm < 1e-8
        assert check_zero_curvature(f, x, 0, 1, "analytic").full_curvature_norm < 1e-12


def test_gaudin_all_pairs_central():
    rng = np.random.default_rng(3)
    eps = np.sort(rng.uniform(-2, 2, 3))[::-1]
    f = gaudin_family(GaudinParams(3, tuple(eps), 0.7))
    worst = scan_family(f, [np.array([0.7, *eps])], "central")
    assert len(worst) == 6
    assert max(r.full_curvature_norm for r in worst.values()) < 1e-8


def test_noncommuting_constant_family():
    r = check_zero_curvature(constant_pauli_family(), (0.0, 0.0), 0, 1)
    assert r.full_curvature_norm == pytest.approx(2 * math.sqrt(2), abs=1e-14)
    assert r.curl_norm == 0.0


def test_scan_single_point_equals_direct_check():
    f = four_state_family(P)
    x = np.array([1.5, -0.5])
    worst = scan_family(f, [x], "central")
    direct = check_zero_curvature(f, x, 0, 1, "central")
    assert worst[(0, 1)] == direct


def test_scan_grid_and_threads_agree():
    f = four_state_family(P)
    grid = box_grid([-3, -3], [3, 3], 10)
    assert len(grid) == 100
    one = scan_family(f, grid, "central")
    four = scan_family(f, grid, "central", workers=4)
    assert one == four
    assert one[(0, 1)].full_curvature_norm < 1e-8


def test_scan_errors():
    f = four_state_family(P)
    with pytest.raises(ParameterError):
        scan_family(f, [])
    with pytest.raises(DimensionError, match=r"at point \[1.0\]"):
        scan_family(f, [np.array([1.0])])


def test_derivative_step_and_methods():
    f = four_state_family(P)
    with pytest.raises(ParameterError):
        f.derivative(0, 0, (0, 0), method="forward")
    g = HamiltonianFamily("quad", 1, 1, lambda j, x: np.array([[x[0] ** 2]]))
    with pytest.raises(ParameterError):
        g.derivative(0, 0, (1.0,), method="analytic")
    # central difference of x^2 is exact up to roundoff
    assert g.derivative(0, 0, (300.0,))[0, 0] == pytest.approx(600.0, rel=1e-9)


def test_family_point_validation():
    f = four_state_family(P)
    with pytest.raises(DimensionError):
        f.matrix(0, (1.0, 2.0, 3.0))
    with pytest.raises(ParameterError):
        f.matrix(0, (math.nan, 0.0))
    bad = HamiltonianFamily("bad", 1, 3, lambda j, x: np.eye(2))
    with pytest.raises(DimensionError):
        bad.evaluate(0, (0.0,))


def test_csv_layout():
    f = four_state_family(P)
    reports = list(scan_family(f, [np.array([0.5, 0.25])]).values())
    text = reports_to_csv(reports, f.slot_names)
    header, row = text.strip().split("\n")
    assert header.split(",") == ["t", "e", *CSV_HEADER_TAIL]
    cells = row.split(",")
    assert cells[:4] == ["0.5", "0.25", "0", "1"]
    assert cells[-1] == "analytic"


def test_restricted_family_keeps_labels():
    f = four_state_family(P).restricted([0, 2], "pair")
    assert f.dim == 2 and f.basis_labels == ("1", "3")
    assert np.array_equal(f.matrix(0, (1.0, 2.0)), four_state_h0(1, 0.5, 0.2, 0.3, 1.0, 2.0)[np.ix_([0, 2], [0, 2])])
    with pytest.raises(ParameterError):
        four_state_family(P).restricted([0, 0])


def _sample_points(family, rng, n):
    pts = []
    while len(pts) < n:
        if family.name.startswith("four_state"):
            pts.append(rng.uniform(-5, 5, 2))
            continue
        head = rng.uniform(0.3, 2.0)
        eps = np.sort(rng.uniform(-3, 3, family.n_generators - 1))[::-1]
        if np.min(-np.diff(eps)) > 0.1:
            pts.append(np.array([head, *eps]))
    return pts


ZOO = {
    "four_state": lambda: four_state_family(P),
    "tavis_cummings": lambda: tavis_cummings_family(TCParams(2, (1.0, 0.2), 0.4, 3)),
    "gaudin": lambda: gaudin_family(GaudinParams(3, (1.0, 0.0, -1.0), 0.7)),
}


@pytest.mark.parametrize("name", sorted(ZOO))
def test_split_norms_bound_full_norm(name):
    family = ZOO[name]()
    rng = np.random.default_rng(11)
    for x in _sample_points(family, rng, 5):
        for j in range(family.n_generators):
            for k in range(j + 1, family.n_generators):
                r = check_zero_curvature(family, x, j, k)
                assert r.full_curvature_norm**2 <= r.commutator_norm**2 + r.curl_norm**2 + 1e-20


@pytest.mark.parametrize("name", sorted(ZOO))
def test_analytic_and_central_curl_agree(name):
    family = ZOO[name]()
    rng = np.random.default_rng(5)
    for x in _sample_points(family, rng, 5):
        for j in range(family.n_generators):
            for k in range(j + 1, family.n_generators):
                a = check_curl(family, x, j, k, "analytic")
                c = check_curl(family, x, j, k, "central")
                assert abs(a - c) < 1e-6
