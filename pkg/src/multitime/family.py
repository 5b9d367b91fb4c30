"""Parameter-dependent commuting Hamiltonian families and zero-curvature checks.

A family holds generators H_j(x), j = 0..M, over x = (t, x^1, ..., x^M).
Slot 0 is the physical time.  The verifier measures

    F_jk = d_j H_k - d_k H_j - i [H_k, H_j]

together with its commutator and curl parts; it reports norms only and
leaves thresholds to the caller.
"""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, MultitimeError, NumericalError, ParameterError
from .operators import HermitianOperator, commutator, frobenius_norm

REL_STEP = 1e-5

GeneratorFn = Callable[[int, np.ndarray], np.ndarray]
PartialFn = Callable[[int, int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class HamiltonianFamily:
    """Generators H_j(x) with optional analytic partials d_k H_j(x).

    ``generator(j, x)`` and ``partial(j, k, x)`` must be pure functions of
    their arguments so evaluations can be shared across threads.
    """

    name: str
    n_generators: int
    dim: int
    generator: GeneratorFn = field(repr=False)
    partial: PartialFn | None = field(default=None, repr=False)
    real_valued: bool = True
    slot_names: tuple[str, ...] = ()
    basis_labels: tuple[str, ...] = ()
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_generators < 1 or self.dim < 1:
            raise ParameterError("a family needs at least one generator and dim >= 1")
        if not self.slot_names:
            names = ("t",) + tuple(f"x{j}" for j in range(1, self.n_generators))
            object.__setattr__(self, "slot_names", names)
        if not self.basis_labels:
            object.__setattr__(self, "basis_labels", tuple(str(i) for i in range(self.dim)))

    @property
    def m_plus_one(self) -> int:
        return self.n_generators

    @property
    def has_partials(self) -> bool:
        return self.partial is not None

    def point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n_generators:
            raise DimensionError(f"{self.name}: point has {x.shape[0]} coordinates, expected {self.n_generators}")
        if not np.all(np.isfinite(x)):
            raise ParameterError(f"{self.name}: non-finite point {x}")
        return x

    def _slot(self, j: int) -> int:
        if not 0 <= j < self.n_generators:
            raise ParameterError(f"{self.name}: generator index {j} outside 0..{self.n_generators - 1}")
        return j

    def matrix(self, j: int, x) -> np.ndarray:
        """Raw generator matrix (no Hermiticity certificate)."""
        return self.generator(self._slot(j), self.point(x))

    def evaluate(self, j: int, x) -> HermitianOperator:
        m = self.matrix(j, x)
        if m.shape != (self.dim, self.dim):
            raise DimensionError(f"{self.name}: H_{j} has shape {m.shape}, expected {(self.dim, self.dim)}")
        return HermitianOperator(m, f"{self.name}.H{j}")

    def derivative(self, j: int, k: int, x, method: str = "auto", rel_step: float = REL_STEP) -> np.ndarray:
        """d_k H_j at x, analytic when available unless ``method='central'``."""
        self._slot(j), self._slot(k)
        x = self.point(x)
        if method == "auto":
            method = "analytic" if self.has_partials else "central"
        if method == "analytic":
            if self.partial is None:
                raise ParameterError(f"{self.name}: no analytic partials")
            return self.partial(j, k, x)
        if method != "central":
            raise ParameterError(f"unknown derivative method {method!r}")
        h = rel_step * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        return (self.generator(j, xp) - self.generator(j, xm)) / (2.0 * h)

    def effective(self, x, velocity) -> np.ndarray:
        """sum_j v^j H_j(x); generators with zero velocity are not evaluated."""
        x = self.point(x)
        v = np.asarray(velocity, dtype=float)
        out = None
        for j in np.flatnonzero(v):
            term = v[j] * self.generator(int(j), x)
            out = term if out is None else out + term
        if out is None:
            return np.zeros((self.dim, self.dim), dtype=float if self.real_valued else complex)
        return out

    def effective_derivative(self, x, velocity) -> np.ndarray:
        """d/dtau of sum_j v^j H_j(x + tau v) via analytic partials."""
        x = self.point(x)
        v = np.asarray(velocity, dtype=float)
        nz = np.flatnonzero(v)
        out = np.zeros((self.dim, self.dim), dtype=float if self.real_valued else complex)
        for j in nz:
            for k in nz:
                out = out + v[j] * v[k] * self.partial(int(j), int(k), x)
        return out

    def check_real(self, points: Iterable) -> float:
        """Largest |Im| over all generators at the given points."""
        worst = 0.0
        for x in points:
            for j in range(self.n_generators):
                worst = max(worst, float(np.max(np.abs(np.imag(self.matrix(j, x))))))
        return worst

    def restricted(self, indices: Sequence[int], name: str | None = None) -> "HamiltonianFamily":
        """Project every generator onto the coordinate subspace ``indices``.

        Only meaningful when the subspace is invariant under all generators
        (e.g. a fixed excitation-number sector).
        """
        idx = np.asarray(indices, dtype=int)
        if idx.size == 0 or len(set(idx.tolist())) != idx.size:
            raise ParameterError("restriction needs distinct, non-empty indices")
        if idx.min() < 0 or idx.max() >= self.dim:
            raise ParameterError("restriction index out of range")
        sub = np.ix_(idx, idx)
        gen, par = self.generator, self.partial
        return replace(
            self,
            name=name or f"{self.name}[{idx.size}]",
            dim=int(idx.size),
            generator=lambda j, x: gen(j, x)[sub],
            partial=None if par is None else (lambda j, k, x: par(j, k, x)[sub]),
            basis_labels=tuple(self.basis_labels[i] for i in idx),
            params={**self.params, "restricted_to": idx.tolist()},
        )


@dataclass(frozen=True)
class CurvatureReport:
    point: tuple
    pair: tuple[int, int]
    commutator_norm: float
    curl_norm: float
    full_curvature_norm: float
    derivative_method: str

    def row(self) -> list:
        j, k = self.pair
        return [*self.point, j, k, self.commutator_norm, self.curl_norm, self.full_curvature_norm, self.derivative_method]


def _method_tag(family: HamiltonianFamily, method: str) -> str:
    if method == "auto":
        method = "analytic" if family.has_partials else "central"
    return method if method == "analytic" else f"central-difference({REL_STEP:g})"


def check_commutation(family: HamiltonianFamily, x, j: int, k: int) -> float:
    """Frobenius norm of [H_j(x), H_k(x)]."""
    if j == k:
        family._slot(j)
        return 0.0
    return frobenius_norm(commutator(family.matrix(j, x), family.matrix(k, x)))


def check_curl(family: HamiltonianFamily, x, j: int, k: int, method: str = "auto") -> float:
    """Frobenius norm of d_j H_k - d_k H_j."""
    if j == k:
        family._slot(j)
        return 0.0
    return frobenius_norm(family.derivative(k, j, x, method) - family.derivative(j, k, x, method))


def check_zero_curvature(family: HamiltonianFamily, x, j: int, k: int, method: str = "auto") -> CurvatureReport:
    x = family.point(x)
    if j == k:
        family._slot(j)
        return CurvatureReport(tuple(x.tolist()), (j, k), 0.0, 0.0, 0.0, _method_tag(family, method))
    hj, hk = family.matrix(j, x), family.matrix(k, x)
    curl = family.derivative(k, j, x, method) - family.derivative(j, k, x, method)
    comm = commutator(hk, hj)
    return CurvatureReport(
        point=tuple(x.tolist()),
        pair=(j, k),
        commutator_norm=frobenius_norm(comm),
        curl_norm=frobenius_norm(curl),
        full_curvature_norm=frobenius_norm(curl - 1j * comm),
        derivative_method=_method_tag(family, method),
    )


def _point_reports(family, x, pairs, method):
    try:
        return [check_zero_curvature(family, x, j, k, method) for j, k in pairs]
    except MultitimeError as exc:
        raise type(exc)(f"at point {np.asarray(x).tolist()}: {exc}") from exc
    except Exception as exc:
        raise NumericalError(f"at point {np.asarray(x).tolist()}: {exc!r}") from exc


def scan_family(family: HamiltonianFamily, grid: Sequence, method: str = "auto", workers: int = 1) -> dict:
    """Worst curvature report over ``grid`` for every pair j < k."""
    grid = list(grid)
    if not grid:
        raise ParameterError("scan_family needs a non-empty grid")
    pairs = list(itertools.combinations(range(family.n_generators), 2))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_point = list(pool.map(lambda x: _point_reports(family, x, pairs, method), grid))
    else:
        per_point = [_point_reports(family, x, pairs, method) for x in grid]
    worst = {}
    for reports in per_point:
        for r in reports:
            best = worst.get(r.pair)
            if best is None or r.full_curvature_norm > best.full_curvature_norm:
                worst[r.pair] = r
    return worst


def box_grid(lower: Sequence[float], upper: Sequence[float], n_per_axis: int | Sequence[int]) -> list[np.ndarray]:
    """Tensor grid including the box corners, first axis slowest."""
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    counts = [n_per_axis] * lower.size if np.isscalar(n_per_axis) else list(n_per_axis)
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, counts)]
    return [np.array(p) for p in itertools.product(*axes)]


CSV_HEADER_TAIL = ["j", "k", "commutator_norm", "curl_norm", "full_norm", "method"]


def reports_to_csv(reports: Iterable[CurvatureReport], slot_names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(slot_names) + CSV_HEADER_TAIL)
    for r in reports:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r.row()])
    return buf.getvalue()
