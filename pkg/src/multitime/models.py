"""Concrete commuting families.

four-state     H0(t, e), H1(t, e) over slots (t, e); effective h(tau) along e = v tau + e0
tavis-cummings H_TC(omega, eps) and its partners H_j over slots (omega, eps_1..eps_N)
gaudin         H_BCS(B, eps) and Gaudin magnets H_j over slots (B, eps_1..eps_N)
lz2            2x2 Landau-Zener sweep [[b1 t, g], [g, b2 t]]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .family import HamiltonianFamily
from .operators import DEFAULT_DIM_LIMIT, HermitianOperator, build_spin_boson_bundle

EPS_SEPARATION = 1e-9


def _finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise ParameterError(f"{name}: non-finite parameter {v}")


# ---------------------------------------------------------------------------
# four-state model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FourStateParams:
    b1: float = 1.0
    b2: float = 0.5
    g: float = 0.2
    gamma: float = 0.3
    e0: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        _finite("four-state", self.b1, self.b2, self.g, self.gamma, self.e0, self.v)
        if not self.b1 > self.b2 > 0:
            raise ParameterError(f"four-state slopes need b1 > b2 > 0, got b1={self.b1}, b2={self.b2}")
        if self.v < 0:
            raise ParameterError(f"four-state sweep rate v must be >= 0, got {self.v}")

    @property
    def d(self) -> float:
        return self.b1 * self.b1 - self.b2 * self.b2


def _h0(p: FourStateParams, t: float, e: float) -> np.ndarray:
    b1, b2, g, c = p.b1, p.b2, p.g, p.gamma
    return np.array(
        [
            [b1 * t + e, 0.0, g, -c],
            [0.0, -b1 * t + e, c, g],
            [g, c, b2 * t, 0.0],
            [-c, g, 0.0, -b2 * t],
        ]
    )


def _h1(p: FourStateParams, t: float, e: float) -> np.ndarray:
    b1, b2, d = p.b1, p.b2, p.d
    gm = p.g / (b1 - b2)
    cp = -p.gamma / (b1 + b2)
    return np.array(
        [
            [t + b1 * e / d, 0.0, gm, cp],
            [0.0, t - b1 * e / d, cp, -gm],
            [gm, cp, -b2 * e / d, 0.0],
            [cp, -gm, 0.0, b2 * e / d],
        ]
    )


def four_state_H0(p: FourStateParams, t: float, e: float) -> HermitianOperator:
    return HermitianOperator(_h0(p, t, e), "four_state.H0")


def four_state_H1(p: FourStateParams, t: float, e: float) -> HermitianOperator:
    return HermitianOperator(_h1(p, t, e), "four_state.H1")


def four_state_coefficients(p: FourStateParams) -> dict:
    """Slopes, offsets and couplings of h(tau).

    The offsets use xy/v = v/(b1^2 - b2^2), so v = 0 needs no special case.
    """
    b1, b2, v, e0 = p.b1, p.b2, p.v, p.e0
    x = v / (b1 - b2)
    y = v / (b1 + b2)
    xy = x * y
    xy_over_v = v / p.d
    return {
        "x": x,
        "y": y,
        "beta": (2 * v + b1 * (1 + xy), 2 * v - b1 * (1 + xy), b2 * (1 - xy), -b2 * (1 - xy)),
        "offset": (e0 * (1 + b1 * xy_over_v), e0 * (1 - b1 * xy_over_v), -e0 * b2 * xy_over_v, e0 * b2 * xy_over_v),
    }


def _h_tau(p: FourStateParams, tau: float, coeffs: dict | None = None) -> np.ndarray:
    c = coeffs or four_state_coefficients(p)
    x, y = c["x"], c["y"]
    beta, off = c["beta"], c["offset"]
    g, gm = p.g, p.gamma
    return np.array(
        [
            [beta[0] * tau + off[0], 0.0, g * (1 + x), -gm * (1 + y)],
            [0.0, beta[1] * tau + off[1], gm * (1 - y), g * (1 - x)],
            [g * (1 + x), gm * (1 - y), beta[2] * tau + off[2], 0.0],
            [-gm * (1 + y), g * (1 - x), 0.0, beta[3] * tau + off[3]],
        ]
    )


def four_state_h_tau(p: FourStateParams, tau: float) -> HermitianOperator:
    """Effective Hamiltonian along t = tau, e = v tau + e0 (explicit form)."""
    return HermitianOperator(_h_tau(p, tau), "four_state.h")


def four_state_h_tau_sum(p: FourStateParams, tau: float) -> HermitianOperator:
    """Same Hamiltonian assembled as H0(x(tau)) + v H1(x(tau))."""
    e = p.v * tau + p.e0
    return HermitianOperator(_h0(p, tau, e) + p.v * _h1(p, tau, e), "four_state.h_sum")


FOUR_STATE_LABELS = ("1", "2", "3", "4")


def four_state_family(p: FourStateParams) -> HamiltonianFamily:
    """Two-generator family over slots (t, e)."""
    b1, b2, d = p.b1, p.b2, p.d
    partials = {
        (0, 0): np.diag([b1, -b1, b2, -b2]),
        (0, 1): np.diag([1.0, 1.0, 0.0, 0.0]),
        (1, 0): np.diag([1.0, 1.0, 0.0, 0.0]),
        (1, 1): np.diag([b1 / d, -b1 / d, -b2 / d, b2 / d]),
    }

    def generator(j, x):
        return _h0(p, x[0], x[1]) if j == 0 else _h1(p, x[0], x[1])

    return HamiltonianFamily(
        name="four_state",
        n_generators=2,
        dim=4,
        generator=generator,
        partial=lambda j, k, x: partials[(j, k)].copy(),
        slot_names=("t", "e"),
        basis_labels=FOUR_STATE_LABELS,
        params={"model": "four_state", **p.__dict__},
    )


def four_state_h_family(p: FourStateParams) -> HamiltonianFamily:
    """Single-generator family h(tau) over the slot tau."""
    coeffs = four_state_coefficients(p)
    slope = np.diag(coeffs["beta"])
    return HamiltonianFamily(
        name="four_state_h",
        n_generators=1,
        dim=4,
        generator=lambda j, x: _h_tau(p, x[0], coeffs),
        partial=lambda j, k, x: slope.copy(),
        slot_names=("tau",),
        basis_labels=FOUR_STATE_LABELS,
        params={"model": "four_state_h", **p.__dict__},
    )


def four_state_boundary_slopes(p: FourStateParams) -> tuple[float, ...]:
    """Slopes s of the diabatic degeneracy lines e = s t of coupled pairs (13, 14, 23, 24)."""
    return (p.b2 - p.b1, -p.b2 - p.b1, p.b1 + p.b2, p.b1 - p.b2)


# ---------------------------------------------------------------------------
# two-state Landau-Zener
# ---------------------------------------------------------------------------


def lz_two_state(b: float, g: float) -> HamiltonianFamily:
    """H(t) = [[b1 t, g], [g, b2 t]] with b1 = b/2, b2 = -b/2."""
    _finite("lz2", b, g)
    if b == 0:
        raise ParameterError("lz2: slope difference must be non-zero")
    b1, b2 = 0.5 * b, -0.5 * b
    slope = np.diag([b1, b2])
    return HamiltonianFamily(
        name="lz2",
        n_generators=1,
        dim=2,
        generator=lambda j, x: np.array([[b1 * x[0], g], [g, b2 * x[0]]]),
        partial=lambda j, k, x: slope.copy(),
        slot_names=("t",),
        basis_labels=("1", "2"),
        params={"model": "lz2", "b": b, "g": g},
    )


# ---------------------------------------------------------------------------
# spin models
# ---------------------------------------------------------------------------


def _check_distinct(eps, where: str):
    eps = np.asarray(eps, dtype=float)
    if eps.size > 1:
        gaps = np.abs(eps[:, None] - eps[None, :])[np.triu_indices(eps.size, 1)]
        if gaps.min() <= EPS_SEPARATION:
            raise ParameterError(f"{where}: coincident epsilons {eps.tolist()}")


@dataclass(frozen=True)
class TCParams:
    n_spins: int
    epsilons: tuple[float, ...]
    g: float
    boson_cutoff: int

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        if len(self.epsilons) != self.n_spins or self.n_spins < 1:
            raise ParameterError(f"tavis-cummings: need {self.n_spins} epsilons, got {len(self.epsilons)}")
        _finite("tavis-cummings", self.g, *self.epsilons)
        if any(a <= b for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ParameterError(f"tavis-cummings: epsilons must be strictly decreasing, got {self.epsilons}")
        _check_distinct(self.epsilons, "tavis-cummings")
        if self.boson_cutoff < 1:
            raise ParameterError("tavis-cummings: boson_cutoff must be >= 1")


def _real(m) -> np.ndarray:
    return np.ascontiguousarray(np.real(m))


def _spin_pieces(bundle):
    n = bundle.basis.n_spins
    sz = [_real(m) for m in bundle.s_z]
    sdot = {}
    for j in range(n):
        for k in range(j + 1, n):
            sdot[(j, k)] = sdot[(k, j)] = _real(bundle.spin_dot(j, k))
    return sz, sdot


def tavis_cummings_family(
    p: TCParams,
    sector: int | None = None,
    faithful: bool = True,
    dim_limit: int = DEFAULT_DIM_LIMIT,
) -> HamiltonianFamily:
    """Driven Tavis-Cummings family over slots (omega, eps_1, ..., eps_N).

    The truncated boson breaks [a, a^dag] = 1 on the top occupation, which
    corrupts every excitation sector above ``boson_cutoff``.  With
    ``faithful`` those sectors are dropped; ``sector`` keeps a single one.
    """
    bundle = build_spin_boson_bundle(p.n_spins, p.boson_cutoff, dim_limit)
    n = p.n_spins
    g = p.g
    sz, sdot = _spin_pieces(bundle)
    num = _real(bundle.number)
    hop = [_real(bundle.a_dagger @ bundle.s_minus[j] + bundle.a @ bundle.s_plus[j]) for j in range(n)]
    hop_sum = sum(hop)

    def eps_of(x):
        eps = x[1:]
        _check_distinct(eps, "tavis-cummings")
        return eps

    def generator(j, x):
        omega, eps = x[0], eps_of(x)
        if j == 0:
            out = -omega * num + g * hop_sum
            for i in range(n):
                out = out + eps[i] * sz[i]
            return out
        i = j - 1
        out = (eps[i] + omega) * sz[i] + g * hop[i]
        for k in range(n):
            if k != i:
                out = out + (2 * g * g / (eps[i] - eps[k])) * sdot[(i, k)]
        return out

    def partial(j, k, x):
        eps = eps_of(x)
        if j == 0:
            return -num.copy() if k == 0 else sz[k - 1].copy()
        i = j - 1
        if k == 0:
            return sz[i].copy()
        m = k - 1
        if m != i:
            return (2 * g * g / (eps[i] - eps[m]) ** 2) * sdot[(i, m)]
        out = sz[i].copy()
        for q in range(n):
            if q != i:
                out = out - (2 * g * g / (eps[i] - eps[q]) ** 2) * sdot[(i, q)]
        return out

    family = HamiltonianFamily(
        name="tavis_cummings",
        n_generators=n + 1,
        dim=bundle.dim,
        generator=generator,
        partial=partial,
        slot_names=("omega",) + tuple(f"eps{j + 1}" for j in range(n)),
        basis_labels=tuple(bundle.basis.labels()),
        params={"model": "tavis_cummings", "n_spins": n, "epsilons": list(p.epsilons), "g": g, "boson_cutoff": p.boson_cutoff},
    )
    exc = np.array([bundle.basis.excitations(i) for i in range(bundle.dim)])
    if sector is not None:
        if not 0 <= sector <= p.boson_cutoff:
            raise ParameterError(f"tavis-cummings: sector {sector} outside 0..{p.boson_cutoff}")
        keep = np.flatnonzero(exc == sector)
        return family.restricted(keep, name=f"tavis_cummings[N={sector}]")
    if faithful:
        keep = np.flatnonzero(exc <= p.boson_cutoff)
        return family.restricted(keep, name="tavis_cummings")
    return family


def tavis_cummings_excitation(family: HamiltonianFamily) -> np.ndarray:
    """Excitation-number operator a^dag a + sum_j s_j^z on the family's basis."""
    n_spins = family.params["n_spins"]
    diag = []
    for lab in family.basis_labels:
        occ, spins = lab.split(":")
        diag.append(int(occ[1:]) + 0.5 * (spins.count("u") - spins.count("d")))
    assert len(spins) == n_spins
    return np.diag(diag)


def tavis_cummings_number(family: HamiltonianFamily) -> np.ndarray:
    """Boson number a^dag a on the family's basis."""
    return np.diag([float(lab.split(":")[0][1:]) for lab in family.basis_labels])


@dataclass(frozen=True)
class GaudinParams:
    n_spins: int
    epsilons: tuple[float, ...]
    B: float

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        if len(self.epsilons) != self.n_spins or self.n_spins < 1:
            raise ParameterError(f"gaudin: need {self.n_spins} epsilons, got {len(self.epsilons)}")
        _finite("gaudin", self.B, *self.epsilons)
        _check_distinct(self.epsilons, "gaudin")


def gaudin_family(p: GaudinParams, dim_limit: int = DEFAULT_DIM_LIMIT) -> HamiltonianFamily:
    """BCS Hamiltonian and Gaudin magnets over slots (B, eps_1, ..., eps_N).

    Generator 0 is H_BCS, singular at B = 0; the magnets are regular there.
    """
    bundle = build_spin_boson_bundle(p.n_spins, 0, dim_limit)
    n = p.n_spins
    sz, sdot = _spin_pieces(bundle)
    s_plus = sum(bundle.s_plus)
    pairing = _real(s_plus @ s_plus.T)

    def eps_of(x):
        eps = x[1:]
        _check_distinct(eps, "gaudin")
        return eps

    def need_b(b):
        if b == 0:
            raise ParameterError("gaudin: H_BCS is singular at B = 0")

    def generator(j, x):
        b, eps = x[0], eps_of(x)
        if j == 0:
            need_b(b)
            out = (-0.5 / b) * pairing
            for i in range(n):
                out = out + (2 * eps[i]) * sz[i]
            return out
        i = j - 1
        out = (2 * b) * sz[i]
        for k in range(n):
            if k != i:
                out = out - (1.0 / (eps[i] - eps[k])) * sdot[(i, k)]
        return out

    def partial(j, k, x):
        b, eps = x[0], eps_of(x)
        if j == 0:
            if k == 0:
                need_b(b)
                return (0.5 / (b * b)) * pairing
            return 2 * sz[k - 1]
        i = j - 1
        if k == 0:
            return 2 * sz[i]
        m = k - 1
        if m != i:
            return (-1.0 / (eps[i] - eps[m]) ** 2) * sdot[(i, m)]
        out = np.zeros_like(sz[i])
        for q in range(n):
            if q != i:
                out = out + (1.0 / (eps[i] - eps[q]) ** 2) * sdot[(i, q)]
        return out

    return HamiltonianFamily(
        name="gaudin",
        n_generators=n + 1,
        dim=bundle.dim,
        generator=generator,
        partial=partial,
        slot_names=("B",) + tuple(f"eps{j + 1}" for j in range(n)),
        basis_labels=tuple(bundle.basis.labels()),
        params={"model": "gaudin", "n_spins": n, "epsilons": list(p.epsilons), "B": p.B},
    )


def gaudin_total_sz(family: HamiltonianFamily) -> np.ndarray:
    return np.diag([0.5 * (lab.count("u") - lab.count("d")) for lab in family.basis_labels])
