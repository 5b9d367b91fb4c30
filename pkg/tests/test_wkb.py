import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from multitime.errors import AdiabaticityError, DegeneracyError, FamilyNotCommutingError, ParameterError, UnsupportedCrossingError
from multitime.evolution import IntegratorOptions, ParamPath, propagate
from multitime.family import HamiltonianFamily
from multitime.models import FourStateParams, GaudinParams, four_state_family, gaudin_family
from multitime.scattering import lz_probability
from multitime.wkb import (
    adiabatic_frame,
    continue_frame,
    coupling_field,
    crossing_pairs,
    four_state_boundary_slopes,
    kappa_halfwidth,
    kappa_map,
    labelled_kappa,
    match_domains,
    momentum_curl_check,
    sector_labels,
    wkb_propagate,
)

from oracles import SX, SZ

P = FourStateParams()
F = four_state_family(P)


def asymptote_23(t, e, p=P):
    s = p.b1 + p.b2
    return abs(p.gamma * s / (s * t - e) ** 3)


def test_frame_far_from_crossings():
    fr = adiabatic_frame(F, (200.0, 0.0))
    assert np.allclose(fr.energies, [-200, -100, 100, 200], atol=1e-2)
    # diabatic order at large positive t: -b1 t, -b2 t, b2 t, b1 t
    assert fr.diabatic.tolist() == [1, 3, 2, 0]
    assert fr.level_of(0) == 3
    assert fr.eigen_residual(F) < 1e-10
    assert np.allclose(fr.momenta[0], -fr.energies)


def test_frame_errors():
    with pytest.raises(DegeneracyError):
        adiabatic_frame(F, (0.0, 0.0))
    pauli = HamiltonianFamily("pauli", 2, 2, lambda j, x: SZ if j == 0 else SX, lambda j, k, x: np.zeros((2, 2)), real_valued=False)
    with pytest.raises(FamilyNotCommutingError):
        adiabatic_frame(pauli, (0.0, 0.0))


def test_diagonal_family_has_no_coupling():
    diag = HamiltonianFamily("diag", 2, 3, lambda j, x: np.diag([x[0], 2 * x[1], -x[0] - x[1] + 5.0]) * (1 + j))
    cf = coupling_field(diag, (0.3, 0.7))
    assert np.all(cf.B == 0)
    assert np.all(cf.kappa[cf.defined] == 0)
    assert cf.max_kappa() == 0.0


def test_zero_coupling_four_state_kappa_vanishes():
    f = four_state_family(FourStateParams(g=0.0, gamma=0.0))
    m = kappa_map(f, np.linspace(2, 10, 5), np.linspace(-8, 8, 7), (1, 2))
    assert np.all(m.values[~m.masked] == 0.0)


def test_kappa_23_matches_asymptote():
    k = labelled_kappa(F, (30.0, 5.0), (1, 2))
    assert k == pytest.approx(asymptote_23(30.0, 5.0), rel=0.1)
    assert k == pytest.approx(7.03125e-6, rel=0.01)


def test_collinearity_and_momentum_curl():
    cf = coupling_field(F, (5.0, 2.0))
    assert cf.collinearity_residual < 1e-8
    for a in range(4):
        assert momentum_curl_check(F, (5.0, 2.0), 0, 1, a) < 1e-6


def test_gaudin_momentum_curl():
    f = gaudin_family(GaudinParams(2, (1.0, -0.5), 0.7))
    x = (0.7, 1.0, -0.5)
    fr = adiabatic_frame(f, x)
    for a in range(fr.dim):
        assert momentum_curl_check(f, x, 0, 1, a) < 1e-6
        assert momentum_curl_check(f, x, 1, 2, a) < 1e-6
    with pytest.raises(ParameterError):
        momentum_curl_check(f, x, 0, 1, 9)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(-40, 40), e=st.floats(-40, 40))
def test_kappa_is_slot_independent(t, e):
    assume(abs(t) > 1.0)
    try:
        cf = coupling_field(F, (t, e))
    except DegeneracyError:
        assume(False)
    k0, k1 = cf.kappa_from_slot(0), cf.kappa_from_slot(1)
    ok = (np.abs(cf.lam[0]) > 1e-6) & (np.abs(cf.lam[1]) > 1e-6)
    np.fill_diagonal(ok, False)
    scale = np.maximum(1.0, np.abs(k0))
    assert np.all(np.abs(k0 - k1)[ok] <= 1e-6 * scale[ok])


def test_kappa_map_peaks_on_the_crossing_line():
    xs = np.linspace(-30, 30, 41)
    m = kappa_map(F, xs, xs, (1, 2), boundary_slopes=four_state_boundary_slopes(P.b1, P.b2))
    t, e = m.argmax()
    cell = xs[1] - xs[0]
    assert abs(e - (P.b1 + P.b2) * t) <= cell * math.hypot(1, P.b1 + P.b2)
    assert m.masked[:, 20].all()  # t = 0 column is degenerate
    assert len(m.boundary_polylines()) == 4
    header, first = m.to_csv().splitlines()[:2]
    assert header == "x,y,kappa,masked,domain"
    assert first.split(",")[:2] == ["-30", "-30"]


def test_kappa_map_validation():
    with pytest.raises(ParameterError):
        kappa_map(F, [1.0], [1.0], (2, 2))


def test_sector_numbering():
    slopes = four_state_boundary_slopes(1.0, 0.5)
    labels = sector_labels(slopes, np.array([1.0, 0.0, -1.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0, -1.0, 1.0]))
    assert labels.tolist() == [3, 5, 7, 1, 4]
    assert set(sector_labels(slopes, *np.meshgrid(np.linspace(-5, 5, 41), np.linspace(-5, 5, 41))).ravel()) == set(range(1, 9))


def test_kappa_region_narrows_with_t():
    widths = [kappa_halfwidth(F, (1, 2), t, P.b1 + P.b2) for t in (10.0, 20.0, 40.0)]
    assert widths[0] > widths[1] > widths[2] > 0
    # roughly ~1/t
    assert widths[0] / widths[1] == pytest.approx(2.0, rel=0.1)


def test_wkb_constant_family_accumulates_phase():
    h = np.diag([1.0, -0.5, 2.0])
    f = HamiltonianFamily("const", 1, 3, lambda j, x: h, lambda j, k, x: np.zeros((3, 3)))
    r = wkb_propagate(f, ParamPath(([0.0], [2.0])), [1.0, 0.0, 0.0], samples_per_segment=10)
    # levels in ascending order: -0.5, 1, 2; phase exp(-i E L)
    assert np.allclose(r.action, [1.0, -2.0, -4.0], atol=1e-14)
    assert r.amplitudes[0] == pytest.approx(np.exp(1j), abs=1e-14)
    assert r.samples == 10 and r.max_kappa == 0.0


def test_wkb_matches_full_integrator_in_domain():
    path = ParamPath(([20.0, 5.0], [40.0, 5.0]))
    amps = np.array([0.6, 0.0, 0.8j, 0.0])
    start = adiabatic_frame(F, path.start)
    r = wkb_propagate(F, path, amps)
    psi, _ = propagate(F, path, start.vectors @ amps, IntegratorOptions(tol=1e-7))
    pops = np.abs(r.vectors.conj().T @ psi) ** 2
    assert np.max(np.abs(pops - np.abs(amps) ** 2)) < 1e-4
    assert np.max(np.abs(np.abs(r.amplitudes) ** 2 - np.abs(amps) ** 2)) < 1e-15
    assert r.max_kappa < 0.05


def test_wkb_is_path_independent_inside_a_domain():
    amps = np.array([0.6, 0.0, 0.8j, 0.0])
    a = wkb_propagate(F, ParamPath(([20.0, 5.0], [40.0, 5.0])), amps)
    b = wkb_propagate(F, ParamPath(([20.0, 5.0], [20.0, -3.0], [40.0, -3.0], [40.0, 5.0])), amps)
    assert np.linalg.norm(a.state() - b.state()) < 1e-6


def test_wkb_refuses_non_adiabatic_paths():
    with pytest.raises(AdiabaticityError, match="kappa"):
        wkb_propagate(F, ParamPath(([20.0, 5.0], [20.0, 15.0])), np.eye(4)[0])
    with pytest.raises(ParameterError):
        wkb_propagate(F, ParamPath(([20.0, 5.0], [40.0, 5.0])), [1.0, 0.0])


def test_continue_frame_follows_columns():
    fr = adiabatic_frame(F, (30.0, 5.0))
    flipped = fr.vectors[:, [2, 0, 3, 1]] * np.array([1, -1, 1j, -1j])
    vec, order = continue_frame(flipped, fr)
    assert order.tolist() == [2, 0, 3, 1]
    assert np.allclose(vec, flipped, atol=1e-14)


def test_crossing_pairs_across_each_line():
    cases = {((30, 40), (30, 50)): [(1, 2)], ((30, 10), (30, 20)): [(1, 3)], ((30, -20), (30, -10)): [(0, 2)]}
    for (a, b), expected in cases.items():
        assert crossing_pairs(adiabatic_frame(F, a), adiabatic_frame(F, b), 1) == expected


def test_match_domains_block():
    fi, fo = adiabatic_frame(F, (30.0, 40.0)), adiabatic_frame(F, (30.0, 50.0))
    s = match_domains(fi, fo, (1, 2), P.gamma, P.b1 + P.b2)
    p2 = lz_probability(P.gamma, P.b1 + P.b2)
    assert abs(s[1, 1]) ** 2 == pytest.approx(p2, abs=1e-15)
    assert abs(s[1, 2]) ** 2 == pytest.approx(1 - p2, abs=1e-15)
    # direct sum with the identity on the spectators
    assert np.array_equal(s[np.ix_([0, 3], [0, 3])], np.eye(2))
    assert np.all(s[np.ix_([0, 3], [1, 2])] == 0)
    assert np.linalg.norm(s.conj().T @ s - np.eye(4)) < 1e-14
    assert np.array_equal(match_domains(fi, fo, (1, 2), 0.0, 1.0), np.eye(4))
    with pytest.raises(UnsupportedCrossingError):
        match_domains(fi, fo, (0, 2), P.g, P.b1 - P.b2)
    with pytest.raises(UnsupportedCrossingError):
        match_domains(adiabatic_frame(F, (30.0, -20.0)), fo, None, P.g, 1.0)
