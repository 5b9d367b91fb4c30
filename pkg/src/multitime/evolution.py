"""Path-ordered evolution along piecewise-linear paths in (t, x) space.

Every segment is parameterized by s in [0, 1], so its velocity is simply
``end - start`` and the effective Hamiltonian is h(s) = sum_j v^j H_j(x(s)).
Each step applies the exponential midpoint rule exp(-i h(s_mid) ds).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, NumericalError, ParameterError
from .family import HamiltonianFamily
from .operators import HermitianOperator

UNITARITY_LIMIT = 1e-8
NORM_TOL = 1e-12
CAP_SAMPLES = 64


@dataclass(frozen=True)
class Segment:
    start: np.ndarray
    end: np.ndarray

    @property
    def velocity(self) -> np.ndarray:
        return self.end - self.start

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def point(self, s: float) -> np.ndarray:
        return self.start + s * self.velocity


@dataclass(frozen=True)
class ParamPath:
    """Ordered vertices; a single vertex is the zero-length path."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple(np.array(v, dtype=float).reshape(-1) for v in self.vertices)
        if not verts:
            raise ParameterError("a path needs at least one vertex")
        dim = verts[0].size
        for k, v in enumerate(verts):
            if v.size != dim:
                raise DimensionError(f"vertex {k} has {v.size} coordinates, expected {dim}")
            if not np.all(np.isfinite(v)):
                raise ParameterError(f"vertex {k} is not finite: {v.tolist()}")
            v.setflags(write=False)
        for k in range(1, len(verts)):
            if np.array_equal(verts[k], verts[k - 1]):
                raise ParameterError(f"vertices {k - 1} and {k} coincide")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def straight(cls, start, end) -> "ParamPath":
        return cls((start, end))

    @property
    def n_coords(self) -> int:
        return self.vertices[0].size

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]

    @property
    def segments(self) -> list[Segment]:
        return [Segment(a, b) for a, b in zip(self.vertices, self.vertices[1:])]

    def reversed(self) -> "ParamPath":
        return ParamPath(self.vertices[::-1])

    def then(self, other: "ParamPath") -> "ParamPath":
        if not np.array_equal(self.end, other.start):
            raise ParameterError("paths do not join")
        return ParamPath(self.vertices + other.vertices[1:])

    def to_list(self) -> list:
        return [v.tolist() for v in self.vertices]


def effective_hamiltonian(family: HamiltonianFamily, segment: Segment, tau: float) -> HermitianOperator:
    if not 0.0 <= tau <= 1.0:
        raise ParameterError(f"tau={tau} outside the segment range [0, 1]")
    return HermitianOperator(family.effective(segment.point(tau), segment.velocity), f"{family.name}.h")


@dataclass(frozen=True)
class IntegratorOptions:
    """Fixed mode when ``steps`` is set, otherwise adaptive.

    Adaptive mode accepts a step when the step-doubling estimate of its
    local error is below ``tol * ds * |v|`` (tolerance per unit arclength).
    Steps are also capped at ``cap / max(|offdiag h|, sqrt(|dh/ds|))``, which
    resolves avoided crossings that the error estimate alone can step over.
    ``max_phase`` optionally bounds |h| ds per step.
    """

    steps: int | None = None
    tol: float = 1e-6
    cap: float = 0.1
    max_phase: float | None = None
    min_step: float = 1e-13
    max_steps: int = 20_000_000

    def __post_init__(self):
        if self.steps is not None and self.steps < 1:
            raise ParameterError("steps must be >= 1")
        for name in ("tol", "cap", "min_step"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ParameterError(f"{name} must be positive and finite, got {val}")
        if self.max_phase is not None and not self.max_phase > 0:
            raise ParameterError("max_phase must be positive")

    @property
    def method(self) -> str:
        return "fixed-step" if self.steps is not None else "adaptive"


def _step(h: np.ndarray, ds: float) -> tuple[np.ndarray, float]:
    """exp(-i h ds) via eigendecomposition; also returns the spectral radius."""
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed inside a step: {exc}") from exc
    u = (v * np.exp(-1j * ds * w)) @ v.conj().T
    return u, float(np.max(np.abs(w)))


def _offdiag_norm(h: np.ndarray) -> float:
    off = h - np.diag(np.diag(h))
    return float(np.linalg.norm(off, 2)) if h.shape[0] <= 256 else float(np.linalg.norm(off))


def _sweep_norm(family, seg, s, h):
    if family.has_partials:
        dh = family.effective_derivative(seg.point(s), seg.velocity)
    else:
        eps = 1e-4
        lo, hi = max(0.0, s - eps), min(1.0, s + eps)
        dh = (family.effective(seg.point(hi), seg.velocity) - family.effective(seg.point(lo), seg.velocity)) / (hi - lo)
    return float(np.linalg.norm(dh, 2)) if h.shape[0] <= 256 else float(np.linalg.norm(dh))


def _step_caps(family, seg, cap):
    """Step cap sampled on a uniform grid of the segment."""
    grid = np.linspace(0.0, 1.0, CAP_SAMPLES + 1)
    caps = np.empty_like(grid)
    for i, s in enumerate(grid):
        h = family.effective(seg.point(s), seg.velocity)
        scale = max(_offdiag_norm(h), math.sqrt(_sweep_norm(family, seg, s, h)))
        caps[i] = cap / scale if scale > 0 else 1.0
    # a step starting in cell i may reach into cell i+1
    return np.minimum(np.minimum(caps[:-1], caps[1:]), np.append(np.minimum(caps[1:-1], caps[2:]), caps[-1]))


TraceFn = Callable[[int, float, np.ndarray, np.ndarray], None]


def _segment_hamiltonian(family, seg):
    """s -> h(s) without per-call validation (the path was validated once)."""
    family.point(seg.start), family.point(seg.end)
    vel = seg.velocity
    terms = [(int(j), float(vel[j])) for j in np.flatnonzero(vel)]
    gen, start = family.generator, seg.start

    def h_at(s):
        x = start + s * vel
        j, c = terms[0]
        out = c * gen(j, x)
        for j, c in terms[1:]:
            out = out + c * gen(j, x)
        return out

    return h_at


def _fixed_segment(family, seg, u, n, trace, k):
    ds = 1.0 / n
    h_at = _segment_hamiltonian(family, seg)
    for i in range(n):
        step, _ = _step(h_at((i + 0.5) * ds), ds)
        u = step @ u
        if trace is not None:
            trace(k, (i + 1) * ds, seg.point((i + 1) * ds), u)
    return u, n


def _adaptive_segment(family, seg, u, opts: IntegratorOptions, trace, k, budget):
    h_at = _segment_hamiltonian(family, seg)
    scale = opts.tol * seg.length
    caps = _step_caps(family, seg, opts.cap)
    ncell = caps.size
    s, steps = 0.0, 0
    ds = float(caps[0])
    while s < 1.0:
        cell_cap = float(caps[min(int(s * ncell), ncell - 1)])
        ds = min(ds, cell_cap, 1.0 - s)
        if 1.0 - s - ds < 1e-9:
            ds = 1.0 - s
        if ds < opts.min_step:
            raise NumericalError(f"step size underflow ({ds:.3e}) at x={seg.point(s).tolist()}")
        full, radius = _step(h_at(s + 0.5 * ds), ds)
        if opts.max_phase is not None and radius * ds > opts.max_phase:
            ds = 0.9 * opts.max_phase / radius
            continue
        h1, _ = _step(h_at(s + 0.25 * ds), 0.5 * ds)
        h2, _ = _step(h_at(s + 0.75 * ds), 0.5 * ds)
        half = h2 @ h1
        err = float(np.linalg.norm(half - full)) / 3.0
        allowed = scale * ds
        ratio = allowed / err if err > 0 else math.inf
        if err <= allowed:
            u = half @ u
            s = 1.0 if ds == 1.0 - s else s + ds
            steps += 1
            if trace is not None:
                trace(k, s, seg.point(s), u)
            if steps > budget:
                raise NumericalError(f"step budget exceeded at x={seg.point(s).tolist()}")
            ds *= min(2.0, max(0.2, 0.9 * math.sqrt(ratio)))
        else:
            ds *= max(0.2, 0.9 * math.sqrt(ratio))
    return u, steps


def unitarity_defect(u: np.ndarray) -> float:
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))


@dataclass(frozen=True)
class Propagator:
    unitary: np.ndarray = field(repr=False)
    path: ParamPath
    steps_taken: int
    unitarity_defect: float
    method: str

    def __post_init__(self):
        if not self.unitarity_defect < UNITARITY_LIMIT:
            raise NumericalError(f"propagator unitarity defect {self.unitarity_defect:.3e} exceeds {UNITARITY_LIMIT:g}")

    def apply(self, psi) -> np.ndarray:
        return self.unitary @ np.asarray(psi, dtype=complex)


def propagate_matrix(
    family: HamiltonianFamily,
    path: ParamPath,
    opts: IntegratorOptions | None = None,
    trace: TraceFn | None = None,
) -> Propagator:
    """Evolution operator along ``path``.

    ``trace(segment_index, s, x, U)`` is called after every accepted step.
    """
    opts = opts or IntegratorOptions()
    if path.n_coords != family.n_generators:
        raise DimensionError(f"path has {path.n_coords} coordinates, family {family.name} needs {family.n_generators}")
    u = np.eye(family.dim, dtype=complex)
    total = 0
    for k, seg in enumerate(path.segments):
        if opts.steps is not None:
            u, n = _fixed_segment(family, seg, u, opts.steps, trace, k)
        else:
            u, n = _adaptive_segment(family, seg, u, opts, trace, k, opts.max_steps - total)
        total += n
    return Propagator(u, path, total, unitarity_defect(u), opts.method)


def initial_state(dim: int, psi0) -> np.ndarray:
    """Basis index or explicit vector; vectors must be normalized to 1e-12."""
    if isinstance(psi0, (int, np.integer)):
        if not 0 <= psi0 < dim:
            raise ParameterError(f"basis index {psi0} outside 0..{dim - 1}")
        psi = np.zeros(dim, dtype=complex)
        psi[psi0] = 1.0
        return psi
    psi = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi.size != dim:
        raise DimensionError(f"initial state has {psi.size} entries, expected {dim}")
    norm = float(np.linalg.norm(psi))
    if not abs(norm - 1.0) <= NORM_TOL:
        raise ParameterError(f"initial state is not normalized (norm {norm!r})")
    return psi


def propagate(family, path, psi0, opts=None, trace=None) -> tuple[np.ndarray, Propagator]:
    psi = initial_state(family.dim, psi0)
    prop = propagate_matrix(family, path, opts, trace)
    return prop.unitary @ psi, prop


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """min over phi of |a - e^{i phi} b| (Frobenius / Euclidean)."""
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b))


def infidelity(psi_a, psi_b) -> float:
    return max(0.0, float(1.0 - abs(np.vdot(psi_a, psi_b)) ** 2))


@dataclass(frozen=True)
class RichardsonReport:
    steps: tuple[int, ...]
    differences: tuple[float, ...]
    orders: tuple[float, ...]
    exact: bool

    @property
    def order(self) -> float:
        return self.orders[-1] if self.orders else math.nan


def richardson_check(
    family: HamiltonianFamily,
    path: ParamPath,
    psi0=None,
    base_steps: int = 200,
    levels: int = 4,
    floor: float = 1e-12,
) -> RichardsonReport:
    """Self-convergence of the fixed-step integrator.

    Runs with base_steps * 2^k steps per segment, k < levels, and reports
    the differences between successive refinements and the observed
    orders log2(d_k / d_{k+1}).  Differences below ``floor`` mark the
    problem as integrated exactly (no order is reported).
    """
    if levels < 3:
        raise ParameterError("richardson_check needs at least 3 levels")
    counts = tuple(base_steps * 2**k for k in range(levels))
    results = []
    for n in counts:
        prop = propagate_matrix(family, path, IntegratorOptions(steps=n))
        results.append(prop.unitary if psi0 is None else prop.apply(initial_state(family.dim, psi0)))
    diffs = tuple(float(np.linalg.norm(a - b)) for a, b in zip(results, results[1:]))
    exact = all(d < floor for d in diffs)
    orders = () if exact else tuple(math.log2(d1 / d2) if d2 > 0 else math.inf for d1, d2 in zip(diffs, diffs[1:]))
    report = RichardsonReport(counts, diffs, orders, exact)
    if not exact and not 1.5 <= report.order <= 2.5:
        warnings.warn(f"observed order {report.order:.3f} is far from 2; the family may not be smooth along the path")
    return report

