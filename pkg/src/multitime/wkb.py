"""Adiabatic frames, non-adiabatic couplings and WKB evolution in parameter space.

Conventions: levels in a frame are ordered by ascending H_0 eigenvalue,
momenta satisfy H_j |e_a> = -p_j^a |e_a>, and the non-adiabatic coupling
is B_j^ab = <e_a| d_j e_b>.  For commuting families with zero curvature
B_j^ab = kappa^ab (p_j^a - p_j^b) with a single scalar kappa^ab.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .errors import (
    AdiabaticityError,
    DegeneracyError,
    FamilyNotCommutingError,
    ParameterError,
    StencilError,
    UnsupportedCrossingError,
)
from .evolution import ParamPath
from .family import HamiltonianFamily
from .operators import hermitian_eigensystem
from .scattering import CrossingEvent, lz_block, lz_probability

GAP_TOL = 1e-8
OFFDIAG_TOL = 1e-9
LAMBDA_FLOOR = 1e-10
KAPPA_THRESHOLD = 0.05


def diabatic_assignment(vectors: np.ndarray) -> np.ndarray:
    """Diabatic index of each eigenvector column, maximizing total overlap."""
    rows, cols = linear_sum_assignment(-np.abs(vectors) ** 2)
    out = np.empty(vectors.shape[1], dtype=int)
    out[cols] = rows
    return out


@dataclass(frozen=True)
class AdiabaticFrame:
    point: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray = field(repr=False)
    momenta: np.ndarray
    diabatic: np.ndarray
    min_gap: float
    action: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.energies.size

    def level_of(self, diabatic_index: int) -> int:
        """Column holding the given diabatic state."""
        return int(np.flatnonzero(self.diabatic == diabatic_index)[0])

    def eigen_residual(self, family: HamiltonianFamily) -> float:
        """max_j,a |H_j e_a + p_j^a e_a|."""
        worst = 0.0
        for j in range(family.n_generators):
            r = family.matrix(j, self.point) @ self.vectors + self.vectors * self.momenta[j][None, :]
            worst = max(worst, float(np.max(np.linalg.norm(r, axis=0))))
        return worst


def adiabatic_frame(family: HamiltonianFamily, x, gap_tol: float = GAP_TOL) -> AdiabaticFrame:
    """Simultaneous eigenbasis of all generators at x, built from H_0."""
    x = family.point(x)
    w, v = hermitian_eigensystem(family.matrix(0, x), f"{family.name}.H0")
    gaps = np.diff(w)
    min_gap = float(gaps.min()) if gaps.size else math.inf
    if min_gap < gap_tol:
        raise DegeneracyError(f"H_0 has a spectral gap of {min_gap:.3e} at x={x.tolist()}")
    momenta = np.empty((family.n_generators, w.size))
    for j in range(family.n_generators):
        hj = family.matrix(j, x)
        m = v.conj().T @ hj @ v
        off = m - np.diag(np.diag(m))
        scale = max(1.0, float(np.linalg.norm(hj)))
        if np.max(np.abs(off)) > OFFDIAG_TOL * scale:
            raise FamilyNotCommutingError(
                f"H_{j} is not diagonal in the H_0 eigenbasis at x={x.tolist()} (off-diagonal {np.max(np.abs(off)):.3e})"
            )
        momenta[j] = -np.real(np.diag(m))
    return AdiabaticFrame(x, w, v, momenta, diabatic_assignment(v), min_gap)


@dataclass(frozen=True)
class CouplingField:
    point: np.ndarray
    B: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    kappa: np.ndarray
    defined: np.ndarray
    collinearity_residual: float

    def kappa_from_slot(self, j: int) -> np.ndarray:
        """kappa evaluated from slot j alone (nan where |lambda_j| is tiny)."""
        lam = self.lam[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(np.abs(lam) > LAMBDA_FLOOR, self.B[j] / np.where(lam == 0, 1, lam), np.nan)
        np.fill_diagonal(out, np.nan)
        return out

    def max_kappa(self) -> float:
        k = np.abs(self.kappa[self.defined])
        return float(k.max()) if k.size else 0.0


def coupling_field(family: HamiltonianFamily, x, frame: AdiabaticFrame | None = None, method: str = "auto") -> CouplingField:
    frame = frame or adiabatic_frame(family, x)
    v, e = frame.vectors, frame.energies
    n, m = frame.dim, family.n_generators
    denom = e[None, :] - e[:, None]
    np.fill_diagonal(denom, 1.0)
    B = np.empty((m, n, n), dtype=complex)
    for j in range(m):
        d = v.conj().T @ family.derivative(0, j, frame.point, method) @ v
        B[j] = d / denom
        np.fill_diagonal(B[j], 0.0)
    p = frame.momenta
    lam = p[:, :, None] - p[:, None, :]

    best = np.argmax(np.abs(lam), axis=0)
    lam_best = np.take_along_axis(lam, best[None], axis=0)[0]
    b_best = np.take_along_axis(B, best[None], axis=0)[0]
    defined = np.abs(lam_best) > LAMBDA_FLOOR
    np.fill_diagonal(defined, False)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(defined, b_best / np.where(defined, lam_best, 1.0), np.nan)
    if family.real_valued:
        kappa = np.real(kappa)
        B = np.real(B)

    resid = 0.0
    for j in range(m):
        for k in range(j + 1, m):
            r = np.abs(lam[j] * B[k] - lam[k] * B[j])
            resid = max(resid, float(r.max()))
    return CouplingField(frame.point, B, lam, kappa, defined, resid)


def _level_momentum(family, x, a, ref_vec, gap_tol):
    fr = adiabatic_frame(family, x, gap_tol)
    if abs(np.vdot(ref_vec, fr.vectors[:, a])) ** 2 < 0.5:
        raise StencilError(f"level {a} changes character inside the stencil at x={np.asarray(x).tolist()}")
    return fr.momenta[:, a]


def momentum_curl_check(family: HamiltonianFamily, x, j: int, k: int, a: int, rel_step: float = 1e-4, gap_tol: float = 1e-6) -> float:
    """|d_j p_k^a - d_k p_j^a| by central differences (levels by H_0 ordering)."""
    x = family.point(x)
    centre = adiabatic_frame(family, x)
    if not 0 <= a < centre.dim:
        raise ParameterError(f"level {a} outside 0..{centre.dim - 1}")
    ref = centre.vectors[:, a]

    def deriv(slot, comp):
        h = rel_step * max(1.0, abs(x[slot]))
        xp, xm = x.copy(), x.copy()
        xp[slot] += h
        xm[slot] -= h
        try:
            up = _level_momentum(family, xp, a, ref, gap_tol)[comp]
            dn = _level_momentum(family, xm, a, ref, gap_tol)[comp]
        except DegeneracyError as exc:
            raise StencilError(f"degeneracy inside the stencil around x={x.tolist()}: {exc}") from exc
        return (up - dn) / (2 * h)

    return float(abs(deriv(j, k) - deriv(k, j)))


# ---------------------------------------------------------------------------
# kappa maps and domains
# ---------------------------------------------------------------------------


def labelled_kappa(family: HamiltonianFamily, x, pair: tuple[int, int]) -> float:
    """|kappa| between the adiabatic levels continuing diabatic states ``pair``."""
    fr = adiabatic_frame(family, x)
    cf = coupling_field(family, x, fr)
    a, b = fr.level_of(pair[0]), fr.level_of(pair[1])
    return float(abs(cf.kappa[a, b])) if cf.defined[a, b] else math.nan


@dataclass(frozen=True)
class DomainMap:
    """kappa raster over a 2-D slice of parameter space.

    ``values[i, k]`` belongs to (xs[k], ys[i]); masked points are nan.
    ``boundary_slopes`` lists the lines y = s x separating adiabatic domains,
    and ``domains`` numbers those domains 1..2n counterclockwise.
    """

    model: str
    pair: tuple[int, int]
    slots: tuple[int, int]
    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    masked: np.ndarray = field(repr=False)
    boundary_slopes: tuple[float, ...] = ()
    domains: np.ndarray | None = field(default=None, repr=False)

    def argmax(self) -> tuple[float, float]:
        v = np.where(self.masked, -np.inf, self.values)
        i, k = np.unravel_index(int(np.argmax(v)), v.shape)
        return float(self.xs[k]), float(self.ys[i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "kappa", "masked", "domain"])
        for i, y in enumerate(self.ys):
            for k, x in enumerate(self.xs):
                dom = "" if self.domains is None else int(self.domains[i, k])
                w.writerow([format(float(x), ".17g"), format(float(y), ".17g"), format(float(self.values[i, k]), ".17g"), int(self.masked[i, k]), dom])
        return buf.getvalue()

    def boundary_polylines(self) -> list[list[tuple[float, float]]]:
        """Each boundary line clipped to the raster's x range."""
        lo, hi = float(self.xs.min()), float(self.xs.max())
        return [[(lo, s * lo), (hi, s * hi)] for s in self.boundary_slopes]


def sector_labels(slopes: Sequence[float], x, y) -> np.ndarray:
    """Domain number of points (x, y) among the rays of the lines y = s x.

    Domains are numbered 1..2n counterclockwise; the one holding the
    positive x axis is number 3.
    """
    rays = np.sort(np.concatenate([np.arctan(np.asarray(slopes, float)) % (2 * np.pi),
                                   (np.arctan(np.asarray(slopes, float)) + np.pi) % (2 * np.pi)]))
    n = rays.size
    ang = np.arctan2(np.asarray(y, float), np.asarray(x, float)) % (2 * np.pi)
    idx = np.searchsorted(rays, ang, side="right") % n  # sector starting at rays[idx-1]
    home = int(np.searchsorted(rays, 0.0, side="right") % n)
    return (idx - home + 2) % n + 1


def four_state_boundary_slopes(b1: float, b2: float) -> tuple[float, ...]:
    return (b1 - b2, b1 + b2, -(b1 - b2), -(b1 + b2))


def kappa_map(
    family: HamiltonianFamily,
    xs: Sequence[float],
    ys: Sequence[float],
    pair: tuple[int, int],
    slots: tuple[int, int] = (0, 1),
    base: Sequence[float] | None = None,
    boundary_slopes: Sequence[float] = (),
    gap_tol: float = GAP_TOL,
) -> DomainMap:
    """|kappa^ab| for diabatic states ``pair`` on the grid xs x ys.

    Points where H_0 has a gap below ``gap_tol`` are masked.
    """
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if pair[0] == pair[1]:
        raise ParameterError("kappa needs two distinct levels")
    point = np.zeros(family.n_generators) if base is None else family.point(base).copy()
    values = np.full((ys.size, xs.size), np.nan)
    masked = np.zeros(values.shape, dtype=bool)
    for i, y in enumerate(ys):
        for k, x in enumerate(xs):
            point[slots[0]], point[slots[1]] = x, y
            try:
                fr = adiabatic_frame(family, point, gap_tol)
            except DegeneracyError:
                masked[i, k] = True
                continue
            cf = coupling_field(family, point, fr)
            a, b = fr.level_of(pair[0]), fr.level_of(pair[1])
            if cf.defined[a, b]:
                values[i, k] = abs(cf.kappa[a, b])
            else:
                masked[i, k] = True
    domains = None
    if boundary_slopes:
        gx, gy = np.meshgrid(xs, ys)
        domains = sector_labels(boundary_slopes, gx, gy)
    return DomainMap(family.name, tuple(pair), tuple(slots), xs, ys, values, masked, tuple(boundary_slopes), domains)


def kappa_halfwidth(
    family: HamiltonianFamily,
    pair: tuple[int, int],
    t: float,
    slope: float,
    level: float = 1.0,
    span: float = 3.0,
    n: int = 241,
) -> float:
    """Angular half-width of the region kappa > ``level`` around y = slope * t.

    Scans y across [slope t - span, slope t + span] at fixed t, then refines
    both edges of the super-threshold run by root bracketing.
    """
    centre = slope * t

    def f(y):
        return labelled_kappa(family, (t, y), pair) - level

    ys = np.linspace(centre - span, centre + span, n)
    vals = np.array([f(y) for y in ys])
    above = vals > 0
    if not above.any():
        return 0.0
    peak = int(np.nanargmax(vals))
    lo = peak
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = peak
    while hi < n - 1 and above[hi + 1]:
        hi += 1
    if lo == 0 or hi == n - 1:
        raise ParameterError("kappa > level region reaches the scan edge; widen span")
    y_lo = brentq(f, ys[lo - 1], ys[lo])
    y_hi = brentq(f, ys[hi], ys[hi + 1])
    return 0.5 * abs(math.atan2(y_hi, t) - math.atan2(y_lo, t))


# ---------------------------------------------------------------------------
# WKB propagation
# ---------------------------------------------------------------------------


def continue_frame(prev: np.ndarray, frame: AdiabaticFrame) -> tuple[np.ndarray, np.ndarray]:
    """Reorder and rephase ``frame`` columns to follow ``prev`` (parallel transport).

    Returns (vectors, order) where vectors[:, a] continues prev[:, a] and
    order[a] is the column of ``frame`` it came from.
    """
    ov = prev.conj().T @ frame.vectors
    rows, cols = linear_sum_assignment(-np.abs(ov))
    order = np.empty(prev.shape[1], dtype=int)
    order[rows] = cols
    vec = frame.vectors[:, order]
    o = ov[np.arange(ov.shape[0]), order]
    return vec * (np.conj(o) / np.abs(o))[None, :], order


@dataclass(frozen=True)
class WKBResult:
    amplitudes: np.ndarray
    action: np.ndarray
    vectors: np.ndarray = field(repr=False)
    max_kappa: float
    samples: int

    def state(self) -> np.ndarray:
        """Final state in the coordinate basis."""
        return self.vectors @ self.amplitudes


def wkb_propagate(
    family: HamiltonianFamily,
    path: ParamPath,
    amplitudes,
    samples_per_segment: int = 2000,
    kappa_threshold: float = KAPPA_THRESHOLD,
) -> WKBResult:
    """Adiabatic transport of per-level amplitudes along ``path``.

    ``amplitudes[a]`` refers to level a (ascending H_0 order) at the path
    start.  Each level picks up exp(i dS^a), dS^a = int p_j^a dx^j by the
    trapezoid rule, while frames are carried by parallel transport.
    """
    amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if amps.size != family.dim:
        raise ParameterError(f"need {family.dim} amplitudes, got {amps.size}")
    if samples_per_segment < 2:
        raise ParameterError("samples_per_segment must be >= 2")
    frame = adiabatic_frame(family, path.start)
    vecs = frame.vectors
    mom = frame.momenta
    action = np.zeros(family.dim)
    worst = 0.0
    count = 0

    def check(fr):
        nonlocal worst
        k = coupling_field(family, fr.point, fr).max_kappa()
        worst = max(worst, k)
        if k > kappa_threshold:
            raise AdiabaticityError(f"kappa {k:.3g} exceeds {kappa_threshold:g} at x={fr.point.tolist()}")

    check(frame)
    for seg in path.segments:
        vel = seg.velocity
        for s in np.linspace(0.0, 1.0, samples_per_segment + 1)[1:]:
            fr = adiabatic_frame(family, seg.point(s))
            check(fr)
            new_vecs, order = continue_frame(vecs, fr)
            new_mom = fr.momenta[:, order]
            action += 0.5 * (vel @ mom + vel @ new_mom) / samples_per_segment
            vecs, mom = new_vecs, new_mom
            count += 1
    return WKBResult(amps * np.exp(1j * action), action, vecs, worst, count)


# ---------------------------------------------------------------------------
# matching across a domain boundary
# ---------------------------------------------------------------------------


def crossing_pairs(frame_in: AdiabaticFrame, frame_out: AdiabaticFrame, slot: int = 0) -> list[tuple[int, int]]:
    """Diabatic pairs whose momentum difference in ``slot`` changes sign."""
    def by_label(fr):
        p = np.empty(fr.dim)
        p[fr.diabatic] = fr.momenta[slot]
        return p

    pin, pout = by_label(frame_in), by_label(frame_out)
    n = pin.size
    return [(a, b) for a in range(n) for b in range(a + 1, n) if (pin[a] - pin[b]) * (pout[a] - pout[b]) < 0]


def match_domains(
    frame_in: AdiabaticFrame,
    frame_out: AdiabaticFrame,
    pair: tuple[int, int] | None,
    coupling: float,
    slope_diff: float,
    slot: int = 0,
    phase: float = 0.0,
    sign: float = 1.0,
) -> np.ndarray:
    """Embedded 2x2 Landau-Zener block joining two neighbouring domains.

    Exactly one diabatic pair may exchange order between the frames; every
    other adjacent gap must exceed 10 couplings on both sides.
    """
    pairs = crossing_pairs(frame_in, frame_out, slot)
    if len(pairs) != 1:
        raise UnsupportedCrossingError(f"expected one crossing pair between the frames, found {pairs}")
    found = pairs[0]
    if pair is not None and tuple(sorted(pair)) != found:
        raise UnsupportedCrossingError(f"frames cross pair {found}, not {tuple(pair)}")
    for fr in (frame_in, frame_out):
        levels = [fr.level_of(found[0]), fr.level_of(found[1])]
        e = fr.energies
        others = np.delete(np.arange(fr.dim), levels)
        if others.size and np.min(np.abs(e[others][:, None] - e[levels][None, :])) < 10 * abs(coupling):
            raise UnsupportedCrossingError(f"another level lies within 10 couplings of the crossing at x={fr.point.tolist()}")
    a, b = found
    e_in = frame_in.energies[frame_in.level_of(a)] - frame_in.energies[frame_in.level_of(b)]
    event = CrossingEvent(
        position=0.0,
        pair=(a, b),
        probability=lz_probability(coupling, slope_diff),
        phase=phase,
        sign=sign,
        generator=slot,
        orientation=1 if e_in < 0 else -1,
    )
    return lz_block(frame_in.dim, event)
