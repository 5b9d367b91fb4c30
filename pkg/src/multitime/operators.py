"""Dense Hermitian operator algebra and spin/boson basis builders."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, NumericalError, ParameterError, ResourceError

HERMITIAN_RTOL = 1e-13
DEFAULT_DIM_LIMIT = 4096


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HermitianOperator:
    """Square complex matrix certified Hermitian at construction."""

    entries: np.ndarray
    label: str = ""

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionError(f"operator {self.label!r}: expected a non-empty square matrix, got shape {a.shape}")
        scale = float(np.max(np.abs(a)))
        defect = float(np.max(np.abs(a - a.conj().T)))
        if defect > HERMITIAN_RTOL * (scale if scale > 0 else 1.0):
            raise ParameterError(f"operator {self.label!r} is not Hermitian (defect {defect:.3e})")
        object.__setattr__(self, "entries", _frozen(a))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def to_dict(self) -> dict:
        flat = self.entries.reshape(-1)
        return {
            "dim": self.dim,
            "entries": [[float(z.real), float(z.imag)] for z in flat],
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HermitianOperator":
        dim = int(d["dim"])
        pairs = np.asarray(d["entries"], dtype=float)
        if pairs.shape != (dim * dim, 2):
            raise ParameterError(f"expected {dim * dim} [re, im] pairs, got array of shape {pairs.shape}")
        return cls((pairs[:, 0] + 1j * pairs[:, 1]).reshape(dim, dim), d.get("label", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "HermitianOperator":
        return cls.from_dict(json.loads(text))


def _as_matrix(a) -> np.ndarray:
    return a.entries if isinstance(a, HermitianOperator) else np.asarray(a)


def commutator(a, b) -> np.ndarray:
    """Return ``AB - BA`` without symmetrization."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"commutator of shapes {a.shape} and {b.shape}")
    return a @ b - b @ a


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(_as_matrix(a)))


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive.

    Ties resolve to the first index, so the result is a deterministic
    function of the input bits.
    """
    v = np.array(vectors, dtype=complex)
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    v *= (np.abs(pivot) / pivot)[None, :]
    return v


def hermitian_eigensystem(a, label: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and gauge-fixed orthonormal eigenvectors (columns)."""
    m = _as_matrix(a)
    name = label if label is not None else getattr(a, "label", "")
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed for operator {name!r}: {exc}") from exc
    return w, fix_gauge(v)


@dataclass(frozen=True)
class SpinBosonBasis:
    """Product basis of ``n_spins`` spin-1/2 sites and one truncated boson mode.

    Index = n * 2**n_spins + bits, where bit j set means spin j is up.
    ``boson_cutoff == 0`` means no boson mode.
    """

    n_spins: int
    boson_cutoff: int = 0

    def __post_init__(self):
        if self.n_spins < 0 or self.boson_cutoff < 0:
            raise ParameterError("n_spins and boson_cutoff must be non-negative")

    @property
    def has_boson(self) -> bool:
        return self.boson_cutoff > 0

    @property
    def n_boson_levels(self) -> int:
        return self.boson_cutoff + 1 if self.has_boson else 1

    @property
    def dim(self) -> int:
        return self.n_boson_levels * (1 << self.n_spins)

    def state(self, index: int) -> tuple[int, int]:
        """Return (boson occupation, spin bits) for a basis index."""
        if not 0 <= index < self.dim:
            raise IndexError(index)
        return divmod(index, 1 << self.n_spins)

    def index(self, occupation: int, bits: int) -> int:
        if not (0 <= occupation < self.n_boson_levels and 0 <= bits < (1 << self.n_spins)):
            raise IndexError((occupation, bits))
        return occupation * (1 << self.n_spins) + bits

    def spin_up(self, index: int, j: int) -> bool:
        return bool(self.state(index)[1] >> j & 1)

    def excitations(self, index: int) -> int:
        """Boson occupation plus number of up spins."""
        n, bits = self.state(index)
        return n + bin(bits).count("1")

    def label(self, index: int) -> str:
        n, bits = self.state(index)
        spins = "".join("u" if bits >> j & 1 else "d" for j in range(self.n_spins))
        if self.has_boson:
            return f"n{n}:{spins}" if spins else f"n{n}"
        return spins

    def labels(self) -> list[str]:
        return [self.label(i) for i in range(self.dim)]


@dataclass(frozen=True)
class OperatorBundle:
    basis: SpinBosonBasis
    s_z: tuple = field(repr=False)
    s_plus: tuple = field(repr=False)
    s_minus: tuple = field(repr=False)
    a: np.ndarray | None = field(repr=False)
    a_dagger: np.ndarray | None = field(repr=False)
    identity: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @cached_property
    def number(self) -> np.ndarray:
        """Boson number operator (zero matrix without a boson mode)."""
        if self.a is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return self.a_dagger @ self.a

    @cached_property
    def excitation_number(self) -> np.ndarray:
        """a^dag a + sum_j s_z[j]."""
        return self.number + sum(self.s_z, np.zeros_like(self.identity))

    def spin_dot(self, j: int, k: int) -> np.ndarray:
        """s_j . s_k = s_j^z s_k^z + (s_j^+ s_k^- + s_j^- s_k^+) / 2."""
        return self.s_z[j] @ self.s_z[k] + 0.5 * (self.s_plus[j] @ self.s_minus[k] + self.s_minus[j] @ self.s_plus[k])

    def total_s_z(self) -> np.ndarray:
        return sum(self.s_z, np.zeros_like(self.identity))


def build_spin_boson_bundle(n_spins: int, boson_cutoff: int = 0, dim_limit: int = DEFAULT_DIM_LIMIT) -> OperatorBundle:
    basis = SpinBosonBasis(n_spins, boson_cutoff)
    if basis.dim > dim_limit:
        raise ResourceError(f"dimension {basis.dim} exceeds the limit of {dim_limit}")
    dim = basis.dim
    ns = 1 << n_spins
    idx = np.arange(dim)
    occ, bits = np.divmod(idx, ns)

    s_z, s_plus, s_minus = [], [], []
    for j in range(n_spins):
        up = (bits >> j) & 1
        s_z.append(_frozen(np.diag(np.where(up == 1, 0.5, -0.5))))
        sp = np.zeros((dim, dim), dtype=complex)
        src = idx[up == 0]
        sp[src + (1 << j), src] = 1.0
        s_plus.append(_frozen(sp))
        s_minus.append(_frozen(sp.T))

    a = a_dag = None
    if basis.has_boson:
        a_m = np.zeros((dim, dim), dtype=complex)
        src = idx[occ > 0]
        a_m[src - ns, src] = np.sqrt(occ[src])
        a, a_dag = _frozen(a_m), _frozen(a_m.T)

    return OperatorBundle(
        basis=basis,
        s_z=tuple(s_z),
        s_plus=tuple(s_plus),
        s_minus=tuple(s_minus),
        a=a,
        a_dagger=a_dag,
        identity=_frozen(np.eye(dim)),
    )
