"""Multistate Landau-Zener transition probabilities.

Three routes to P_{n n'} = |S_{n n'}|^2 (probability of n' -> n):

* direct integration of the evolution operator between far-away endpoints,
* the same along a deformed path with identical endpoints,
* an ordered product of embedded 2x2 Landau-Zener blocks at isolated
  diabatic crossings (``chain_scatter``),

plus closed forms for the four-state model.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AdiabaticityError,
    LabelingError,
    NumericalError,
    ParameterError,
    RegimeError,
    UnsupportedCrossingError,
)
from .evolution import IntegratorOptions, ParamPath, propagate_matrix
from .family import HamiltonianFamily
from .models import FourStateParams, four_state_family

ENTRY_TOL = 1e-9
STOCHASTIC_TOL = 1e-6
LABEL_MARGIN = 0.1
GAP_FACTOR = 20.0
ISOLATION_FACTOR = 10.0

REGIME_TAGS = {1: "v<b1-b2", 2: "b1-b2<v<b1+b2", 3: "v>b1+b2"}
# reflection t -> -t of the four-state spectrum swaps levels 1<->2 and 3<->4
FOUR_STATE_MIRROR = (1, 0, 3, 2)


class HorizonWarning(UserWarning):
    """Endpoints too close to a crossing for asymptotic labelling."""


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """P[n, n'] = probability of ending in n when starting in n'."""

    entries: np.ndarray = field(repr=False)
    labels: tuple[str, ...] = ()
    regime: str | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.array(self.entries, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ParameterError(f"transition matrix must be square, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise NumericalError("transition matrix has non-finite entries")
        if p.min() < -ENTRY_TOL or p.max() > 1 + ENTRY_TOL:
            raise NumericalError(f"transition probabilities outside [0, 1]: min {p.min():.3e}, max {p.max():.3e}")
        defect = max(np.abs(p.sum(axis=0) - 1).max(), np.abs(p.sum(axis=1) - 1).max())
        if defect > STOCHASTIC_TOL:
            raise NumericalError(f"transition matrix is not doubly stochastic (defect {defect:.3e})")
        p.setflags(write=False)
        object.__setattr__(self, "entries", p)
        labels = tuple(self.labels) or tuple(str(i + 1) for i in range(p.shape[0]))
        if len(labels) != p.shape[0]:
            raise ParameterError("one label per state required")
        object.__setattr__(self, "labels", labels)

    def __eq__(self, other):
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return self.labels == other.labels and self.regime == other.regime and np.array_equal(self.entries, other.entries)

    __hash__ = None

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def stochastic_defect(self) -> float:
        p = self.entries
        return float(max(np.abs(p.sum(axis=0) - 1).max(), np.abs(p.sum(axis=1) - 1).max()))

    def max_deviation(self, other) -> float:
        q = other.entries if isinstance(other, TransitionMatrix) else np.asarray(other)
        return float(np.max(np.abs(self.entries - q)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["to\\from", *self.labels])
        for lab, row in zip(self.labels, self.entries):
            w.writerow([lab, *(format(float(x), ".17g") for x in row)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def lz_probability(coupling: float, slope_diff: float) -> float:
    """Survival probability exp(-2 pi coupling^2 / slope_diff)."""
    if not slope_diff > 0:
        raise ParameterError(f"slope difference must be positive, got {slope_diff}")
    return math.exp(-2.0 * math.pi * coupling * coupling / slope_diff)


def four_state_regime(p: FourStateParams) -> int:
    lo, hi = p.b1 - p.b2, p.b1 + p.b2
    if p.v == lo or p.v == hi:
        raise RegimeError(f"v={p.v} lies on a regime boundary (b1-b2={lo}, b1+b2={hi})")
    return 1 if p.v < lo else (2 if p.v < hi else 3)


def four_state_probabilities(p: FourStateParams) -> tuple[float, float]:
    return lz_probability(p.g, p.b1 - p.b2), lz_probability(p.gamma, p.b1 + p.b2)


def four_state_closed_form(p: FourStateParams) -> TransitionMatrix:
    regime = four_state_regime(p)
    p1, p2 = four_state_probabilities(p)
    q1, q2 = 1 - p1, 1 - p2
    d = p1 * p2
    if regime == 1:
        a, b, c = 0.0, p2 * q1, q2
    elif regime == 2:
        a, b, c = q1 * q2, p2 * q1, p1 * q2
    else:
        a, b, c = 0.0, q1, p1 * q2
    m = np.array([[d, a, b, c], [a, d, c, b], [b, c, d, a], [c, b, a, d]])
    return TransitionMatrix(m, ("1", "2", "3", "4"), REGIME_TAGS[regime])


# ---------------------------------------------------------------------------
# direct integration
# ---------------------------------------------------------------------------


def diabatic_labels(vectors: np.ndarray) -> np.ndarray:
    """label[c] = diabatic index of eigenvector column c (max overlap)."""
    w = np.abs(np.asarray(vectors)) ** 2
    order = np.sort(w, axis=0)
    if w.shape[0] > 1:
        margin = order[-1] - order[-2]
        bad = np.flatnonzero(margin < LABEL_MARGIN)
        if bad.size:
            c = int(bad[0])
            raise LabelingError(f"eigenvector {c} overlaps two diabatic states nearly equally (margin {margin[c]:.3f})")
    labels = np.argmax(w, axis=0)
    if np.unique(labels).size != labels.size:
        raise LabelingError("eigenvector-to-diabatic map is not one-to-one")
    return labels


def diabatic_eigenbasis(h: np.ndarray) -> np.ndarray:
    """Eigenvectors of h reordered so column n is the one labelled n."""
    _, v = np.linalg.eigh(h)
    labels = diabatic_labels(v)
    out = np.empty_like(v)
    out[:, labels] = v
    return out


def endpoint_gap_ratio(h: np.ndarray) -> float:
    """min over directly coupled pairs of |h_ii - h_jj| / max |h_ij|."""
    d = np.real(np.diag(h))
    off = np.abs(h - np.diag(np.diag(h)))
    cmax = off.max()
    if cmax == 0:
        return math.inf
    i, j = np.nonzero(np.triu(off) > 0)
    return float(np.min(np.abs(d[i] - d[j])) / cmax)


def _check_endpoints(family, path, strict):
    for name, x in (("start", path.start), ("end", path.end)):
        ratio = endpoint_gap_ratio(family.matrix(0, x))
        if ratio < GAP_FACTOR:
            msg = f"{name} point {x.tolist()}: diabatic gap only {ratio:.3g}x the coupling (need {GAP_FACTOR:g}x)"
            if strict:
                raise AdiabaticityError(msg)
            warnings.warn(msg, HorizonWarning, stacklevel=3)


def _transition_on_path(family, path, opts, strict):
    _check_endpoints(family, path, strict)
    prop = propagate_matrix(family, path, opts)
    a = diabatic_eigenbasis(family.matrix(0, path.start))
    b = diabatic_eigenbasis(family.matrix(0, path.end))
    s = b.conj().T @ prop.unitary @ a
    return np.abs(s) ** 2, prop


PathSpec = ParamPath | Callable[[float], ParamPath]


def numeric_transition_matrix(
    family: HamiltonianFamily,
    path: PathSpec,
    R: float | None = None,
    opts: IntegratorOptions | None = None,
    drift: bool = False,
    strict: bool = False,
    regime: str | None = None,
) -> TransitionMatrix:
    """Transition probabilities by integrating between the path endpoints.

    ``path`` is either a fixed path or a callable R -> path; with a callable
    and ``drift=True`` the run is repeated at 2R and max |P(R) - P(2R)| is
    reported as the finite-horizon error estimate.  Endpoint eigenvectors
    of generator 0 are labelled by their dominant diabatic component.
    """
    if callable(path):
        if R is None or not R > 0:
            raise ParameterError("a positive horizon R is required")
        fixed = path(R)
    else:
        if drift:
            raise ParameterError("drift needs a path callable R -> path")
        fixed = path
    p, prop = _transition_on_path(family, fixed, opts, strict)
    diag = {"R": R, "steps": prop.steps_taken, "unitarity_defect": prop.unitarity_defect, "method": prop.method}
    if drift:
        p2, prop2 = _transition_on_path(family, path(2 * R), opts, strict)
        diag["drift"] = float(np.max(np.abs(p - p2)))
        diag["unitarity_defect"] = max(prop.unitarity_defect, prop2.unitarity_defect)
        diag["steps"] += prop2.steps_taken
    return TransitionMatrix(p, family.basis_labels, regime, diag)


def deformed_path(start, end, via: str | Sequence = "params-first") -> ParamPath:
    """Same-endpoint path: move the parameters at fixed time first, or pass waypoints."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    if isinstance(via, str):
        if via != "params-first":
            raise ParameterError(f"unknown deformation {via!r}")
        corner = np.concatenate([start[:1], end[1:]])
        verts = [start, corner, end]
    else:
        verts = [start, *[np.asarray(w, float) for w in via], end]
    clean = [verts[0]] + [v for prev, v in zip(verts, verts[1:]) if not np.array_equal(prev, v)]
    return ParamPath(tuple(clean))


def deformed_path_transition_matrix(
    family: HamiltonianFamily,
    start,
    end,
    via: str | Sequence = "params-first",
    opts: IntegratorOptions | None = None,
    strict: bool = False,
) -> TransitionMatrix:
    path = deformed_path(start, end, via)
    return numeric_transition_matrix(family, path, opts=opts, strict=strict)


# ---------------------------------------------------------------------------
# standard paths
# ---------------------------------------------------------------------------


def four_state_endpoints(p: FourStateParams, R: float) -> tuple[np.ndarray, np.ndarray]:
    return np.array([-R, -p.v * R + p.e0]), np.array([R, p.v * R + p.e0])


def four_state_straight_path(p: FourStateParams, R: float) -> ParamPath:
    return ParamPath(four_state_endpoints(p, R))


def four_state_rectangle_path(p: FourStateParams, R: float) -> ParamPath:
    """Leg in e at t = -R, then leg in t at e = vR + e0."""
    return deformed_path(*four_state_endpoints(p, R))


def time_sweep_path(x_fixed: Sequence[float], R: float) -> ParamPath:
    """Slot 0 from -R to R with the other slots held at ``x_fixed``."""
    rest = list(x_fixed)
    return ParamPath(([-R, *rest], [R, *rest]))


# ---------------------------------------------------------------------------
# chained Landau-Zener product
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossingEvent:
    """Isolated crossing of diabatic levels i < j.

    ``position`` orders events along a path (segment index + fraction),
    ``location`` is the moving coordinate at the crossing, ``sign`` the
    unit phase of the governing coupling, ``orientation`` +1 when level i
    has the larger slope and -1 otherwise.
    """

    position: float
    pair: tuple[int, int]
    probability: float
    phase: float = 0.0
    sign: complex = 1.0
    generator: int = 0
    orientation: int = 1
    location: float = math.nan

    def __post_init__(self):
        i, j = self.pair
        if i == j:
            raise ParameterError("a crossing needs two distinct levels")
        if i > j:
            object.__setattr__(self, "pair", (j, i))
            object.__setattr__(self, "orientation", -self.orientation)
        if not 0 < self.probability <= 1:
            raise ParameterError(f"LZ probability {self.probability} outside (0, 1]")
        if abs(abs(self.sign) - 1) > 1e-12:
            raise ParameterError("coupling sign must have unit modulus")


@dataclass(frozen=True)
class ChainScatteringPlan:
    """Events in path order with the adiabatic phases between them.

    ``adiabatic_phases`` holds len(events) + 1 phase vectors: before the
    first event, between consecutive events, and after the last one.
    """

    dim: int
    events: tuple[CrossingEvent, ...]
    phase_policy: str = "keep"
    adiabatic_phases: tuple | None = None
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.phase_policy not in ("keep", "drop"):
            raise ParameterError(f"phase policy must be keep or drop, got {self.phase_policy!r}")
        for ev in self.events:
            if not (0 <= ev.pair[0] < self.dim and 0 <= ev.pair[1] < self.dim):
                raise ParameterError(f"event pair {ev.pair} outside 0..{self.dim - 1}")
        pos = [ev.position for ev in self.events]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ParameterError("events must be strictly ordered along the path")
        if self.adiabatic_phases is not None:
            phases = tuple(np.asarray(ph, dtype=float).reshape(-1) for ph in self.adiabatic_phases)
            if len(phases) != len(self.events) + 1 or any(ph.size != self.dim for ph in phases):
                raise ParameterError("need len(events) + 1 phase vectors of length dim")
            object.__setattr__(self, "adiabatic_phases", phases)

    def with_phases(self, adiabatic_phases=None, event_phases: Sequence[float] | None = None) -> "ChainScatteringPlan":
        events = self.events
        if event_phases is not None:
            if len(event_phases) != len(events):
                raise ParameterError("one phase per event required")
            events = tuple(_replace_phase(ev, ph) for ev, ph in zip(events, event_phases))
        return ChainScatteringPlan(self.dim, events, "keep", adiabatic_phases, self.labels)


def _replace_phase(ev: CrossingEvent, phase: float) -> CrossingEvent:
    return CrossingEvent(ev.position, ev.pair, ev.probability, float(phase), ev.sign, ev.generator, ev.orientation, ev.location)


def lz_block(dim: int, event: CrossingEvent) -> np.ndarray:
    """Identity except on (i, j): [[sqrt p, i u sqrt q e^{i o phi}], [i u* sqrt q e^{-i o phi}, sqrt p]]."""
    i, j = event.pair
    s = np.eye(dim, dtype=complex)
    p = event.probability
    rq = math.sqrt(max(0.0, 1.0 - p))
    rot = np.exp(1j * event.orientation * event.phase)
    s[i, i] = s[j, j] = math.sqrt(p)
    s[i, j] = 1j * event.sign * rq * rot
    s[j, i] = 1j * np.conj(event.sign) * rq / rot
    return s


def chain_scatter(plan: ChainScatteringPlan) -> tuple[np.ndarray, TransitionMatrix]:
    s = np.eye(plan.dim, dtype=complex)
    keep = plan.phase_policy == "keep" and plan.adiabatic_phases is not None
    if keep:
        s = np.diag(np.exp(1j * plan.adiabatic_phases[0]))
    for k, ev in enumerate(plan.events):
        s = lz_block(plan.dim, ev) @ s
        if keep:
            s = np.exp(1j * plan.adiabatic_phases[k + 1])[:, None] * s
    return s, TransitionMatrix(np.abs(s) ** 2, plan.labels)


def _affine_diagonal(family, seg):
    d0 = np.real(np.diag(family.effective(seg.start, seg.velocity)))
    d1 = np.real(np.diag(family.effective(seg.end, seg.velocity)))
    dm = np.real(np.diag(family.effective(seg.point(0.5), seg.velocity)))
    scale = max(1.0, float(np.max(np.abs(d0))), float(np.max(np.abs(d1))))
    if np.max(np.abs(dm - 0.5 * (d0 + d1))) > 1e-9 * scale:
        raise UnsupportedCrossingError("diabatic levels are not affine along a path segment")
    return d0, d1 - d0


def crossing_plan(
    family: HamiltonianFamily,
    path: ParamPath,
    event_phase: Callable[[tuple[int, int]], float] | None = None,
    phase_policy: str = "keep",
) -> ChainScatteringPlan:
    """Locate every crossing of directly coupled diabatic levels along ``path``.

    Diagonal entries must be affine on each segment.  Each crossing must be
    isolated: other levels stay ``ISOLATION_FACTOR`` couplings away.  The
    adiabatic phases between events are the exact integrals of the
    diabatic energies.
    """
    dim = family.dim
    events = []
    pieces = []  # (segment, s_from, s_to) adiabatic stretches
    for k, seg in enumerate(path.segments):
        d0, slope = _affine_diagonal(family, seg)
        found = []
        for i in range(dim):
            for j in range(i + 1, dim):
                ds = slope[i] - slope[j]
                if ds == 0:
                    continue
                s_star = (d0[j] - d0[i]) / ds
                if not 0.0 < s_star < 1.0:
                    continue
                h = family.effective(seg.point(s_star), seg.velocity)
                c = h[i, j]
                if c == 0:
                    continue
                off = np.abs(h - np.diag(np.diag(h))).max()
                diag = np.real(np.diag(h))
                others = np.delete(np.arange(dim), [i, j])
                if others.size and np.min(np.abs(diag[others] - diag[i])) < ISOLATION_FACTOR * off:
                    raise UnsupportedCrossingError(f"crossing of levels {i + 1},{j + 1} on segment {k} is not isolated")
                gen = int(np.argmax(np.abs(seg.velocity)))
                x = seg.point(s_star)
                found.append(
                    CrossingEvent(
                        position=k + s_star,
                        pair=(i, j),
                        probability=lz_probability(abs(c), abs(ds)),
                        phase=event_phase((i, j)) if event_phase else 0.0,
                        sign=complex(c / abs(c)) if np.iscomplexobj(c) and np.imag(c) != 0 else float(np.sign(np.real(c))),
                        generator=gen,
                        orientation=1 if ds > 0 else -1,
                        location=float(x[gen]),
                    )
                )
        found.sort(key=lambda ev: ev.position)
        for a, b in zip(found, found[1:]):
            if b.position == a.position:
                raise UnsupportedCrossingError(f"simultaneous crossings at position {a.position}")
        events.extend(found)
        cuts = [0.0] + [ev.position - k for ev in found] + [1.0]
        pieces.append((k, seg, d0, slope, cuts))

    phases = [np.zeros(dim)]
    for k, seg, d0, slope, cuts in pieces:
        for a, b in zip(cuts, cuts[1:]):
            phases[-1] = phases[-1] - (b - a) * (d0 + slope * 0.5 * (a + b))
            if b < 1.0:
                phases.append(np.zeros(dim))
    return ChainScatteringPlan(dim, tuple(events), phase_policy, tuple(phases), family.basis_labels)


def four_state_lz_phase(phi_g, phi_gamma):
    g_pairs = {(0, 2), (1, 3)}
    return lambda pair: phi_g if pair in g_pairs else phi_gamma


def four_state_event_sequence(
    p: FourStateParams,
    R: float,
    phi_g: float = 0.0,
    phi_gamma: float = 0.0,
    phase_policy: str = "keep",
) -> ChainScatteringPlan:
    """Crossings along the rectangle (leg in e at t=-R, then leg in t)."""
    four_state_regime(p)
    if not R > 0:
        raise ParameterError("R must be positive")
    plan = crossing_plan(four_state_family(p), four_state_rectangle_path(p, R), four_state_lz_phase(phi_g, phi_gamma), phase_policy)
    if len(plan.events) != 4:
        raise ParameterError(f"R={R} too small for e0={p.e0}: found {len(plan.events)} crossings instead of 4")
    return plan


def mirrored_random_phases(n_events: int, dim: int, mirror: Sequence[int], rng: np.random.Generator) -> tuple:
    """Random adiabatic phases symmetric under reflection of the event sequence.

    Stretch k and stretch n-k carry the same phases up to the level
    permutation ``mirror``; the middle stretch is itself mirror-invariant.
    """
    mirror = np.asarray(mirror)
    n = n_events
    phases = [None] * (n + 1)
    for k in range(n // 2 + 1):
        a = rng.uniform(0.0, 2 * math.pi, dim)
        if k == n - k:
            a = np.where(mirror < np.arange(dim), a[mirror], a)
            phases[k] = a
        else:
            phases[k] = a
            phases[n - k] = a[mirror]
    return tuple(phases)
