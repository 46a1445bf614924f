"""Tensor-product Hilbert spaces and dense operators.

Subsystems are ordered; the first-listed subsystem is the slowest-varying
index (leftmost Kronecker factor), so ``|1>_q1 |0>_q2 |0>_c`` maps to the
flat index ``1*2*3 + 0*3 + 0`` for dims ``(2, 2, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-9
NORM_TOL = 1e-10

TRANSMON = "transmon"
CAVITY = "cavity"


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of transmons and cavity modes."""

    subsystem_dims: tuple[int, ...]
    labels: tuple[str, ...]
    kinds: tuple[str, ...] = field(default=())

    def __post_init__(self):
        dims = tuple(int(d) for d in self.subsystem_dims)
        labels = tuple(self.labels)
        kinds = tuple(self.kinds) or tuple(
            CAVITY if lab.startswith("c") else TRANSMON for lab in labels
        )
        if len(dims) != len(labels) or len(kinds) != len(labels):
            raise ValueError("dims, labels and kinds must have equal length")
        if any(d < 1 for d in dims):
            raise ValueError(f"subsystem dimensions must be positive, got {dims}")
        if len(set(labels)) != len(labels):
            raise ValueError(f"subsystem labels must be unique, got {labels}")
        bad = [k for k in kinds if k not in (TRANSMON, CAVITY)]
        if bad:
            raise ValueError(f"unknown subsystem kind(s) {bad}")
        object.__setattr__(self, "subsystem_dims", dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "kinds", kinds)

    @classmethod
    def build(cls, *subsystems: tuple[str, str, int]) -> "HilbertSpace":
        """Build from ``(label, kind, dim)`` triples."""
        labels, kinds, dims = zip(*subsystems)
        return cls(tuple(dims), tuple(labels), tuple(kinds))

    @property
    def dim(self) -> int:
        return int(np.prod(self.subsystem_dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no subsystem labelled {label!r} in {self.labels}") from None

    def subsystem_dim(self, label: str) -> int:
        return self.subsystem_dims[self.index(label)]

    def flat_index(self, occupations: Sequence[int]) -> int:
        if len(occupations) != len(self.subsystem_dims):
            raise ValueError(
                f"need {len(self.subsystem_dims)} occupations, got {len(occupations)}"
            )
        for lab, n, d in zip(self.labels, occupations, self.subsystem_dims):
            if not 0 <= n < d:
                raise ValueError(f"occupation {n} out of range for {lab} (dim {d})")
        return int(np.ravel_multi_index(tuple(occupations), self.subsystem_dims))

    def occupations(self) -> np.ndarray:
        """Occupation numbers of every basis state, shape ``(dim, n_subsystems)``."""
        grids = np.indices(self.subsystem_dims).reshape(len(self.subsystem_dims), -1)
        return grids.T


@dataclass(frozen=True, eq=False)
class QOperator:
    """Dense complex matrix tagged with the space it acts on."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match space dimension {self.space.dim}"
            )
        object.__setattr__(self, "matrix", m)

    def _check(self, other: "QOperator"):
        if not isinstance(other, QOperator):
            return NotImplemented
        if other.space != self.space:
            raise ValueError("operators act on different Hilbert spaces")
        return None

    def dag(self) -> "QOperator":
        return QOperator(self.space, self.matrix.conj().T)

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            if other.space != self.space:
                raise ValueError("operator and state act on different Hilbert spaces")
            return self.matrix @ other.amplitudes
        self._check(other)
        return QOperator(self.space, self.matrix @ other.matrix)

    def __add__(self, other):
        self._check(other)
        return QOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return QOperator(self.space, self.matrix - other.matrix)

    def __neg__(self):
        return QOperator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, QOperator):
            raise TypeError("use @ for operator products")
        return QOperator(self.space, complex(scalar) * self.matrix)

    __rmul__ = __mul__

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def expect(self, state: "StateVector") -> complex:
        return complex(np.vdot(state.amplitudes, self.matrix @ state.amplitudes))


@dataclass(frozen=True, eq=False)
class StateVector:
    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.size != self.space.dim:
            raise ValueError(f"state has {v.size} amplitudes, space has dim {self.space.dim}")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized (norm {norm:.12g})")
        object.__setattr__(self, "amplitudes", v)

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> QOperator:
        return QOperator(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


def identity(space: HilbertSpace) -> QOperator:
    return QOperator(space, np.eye(space.dim, dtype=complex))


def zero(space: HilbertSpace) -> QOperator:
    return QOperator(space, np.zeros((space.dim, space.dim), dtype=complex))


def embed(space: HilbertSpace, label: str, local_matrix) -> QOperator:
    """Place ``local_matrix`` on subsystem ``label``, identities elsewhere."""
    k = space.index(label)
    local = np.asarray(local_matrix, dtype=complex)
    d = space.subsystem_dims[k]
    if local.shape != (d, d):
        raise ValueError(f"local matrix shape {local.shape} does not fit {label} (dim {d})")
    factors = [np.eye(n, dtype=complex) for n in space.subsystem_dims]
    factors[k] = local
    return QOperator(space, reduce(np.kron, factors))


def annihilation(space: HilbertSpace, cavity_label: str) -> QOperator:
    """Truncated photon lowering operator ``a`` on one cavity."""
    k = space.index(cavity_label)
    if space.kinds[k] != CAVITY:
        raise ValueError(f"{cavity_label!r} is a {space.kinds[k]}, not a cavity")
    d = space.subsystem_dims[k]
    if d < 2:
        raise ValueError(f"cavity {cavity_label!r} needs at least 2 Fock levels")
    return embed(space, cavity_label, np.diag(np.sqrt(np.arange(1, d)), 1))


def creation(space: HilbertSpace, cavity_label: str) -> QOperator:
    return annihilation(space, cavity_label).dag()


def transmon_lowering(space: HilbertSpace, transmon_label: str, from_level: int = 1) -> QOperator:
    """Bare transition operator ``|from_level-1><from_level|``.

    ``from_level=1`` is the qubit lowering operator; ``from_level=2`` is the
    leakage transition. Matrix elements such as sqrt(2) belong to the caller.
    """
    k = space.index(transmon_label)
    if space.kinds[k] != TRANSMON:
        raise ValueError(f"{transmon_label!r} is a {space.kinds[k]}, not a transmon")
    d = space.subsystem_dims[k]
    if from_level not in (1, 2) or from_level >= d:
        raise ValueError(f"level {from_level} not available on {transmon_label!r} (dim {d})")
    local = np.zeros((d, d), dtype=complex)
    local[from_level - 1, from_level] = 1.0
    return embed(space, transmon_label, local)


def transmon_sigma_z(space: HilbertSpace, transmon_label: str) -> QOperator:
    """Qubit Pauli-Z; acts as zero on any leakage level (diag(1, -1, 0))."""
    k = space.index(transmon_label)
    d = space.subsystem_dims[k]
    local = np.zeros(d, dtype=complex)
    local[:2] = (1.0, -1.0)
    return embed(space, transmon_label, np.diag(local))


def number_operator(space: HilbertSpace, label: str) -> QOperator:
    d = space.subsystem_dim(label)
    return embed(space, label, np.diag(np.arange(d, dtype=complex)))


def excitation_number(space: HilbertSpace) -> QOperator:
    """Total excitation: sum of occupation levels of every subsystem."""
    occ = space.occupations().sum(axis=1)
    return QOperator(space, np.diag(occ.astype(complex)))


def basis_ket(space: HilbertSpace, occupations: Sequence[int]) -> StateVector:
    v = np.zeros(space.dim, dtype=complex)
    v[space.flat_index(occupations)] = 1.0
    return StateVector(space, v)


def commutator(a: QOperator, b: QOperator) -> QOperator:
    return a @ b - b @ a


def hermitian_eigendecomposition(op: QOperator, tol: float = HERMITIAN_TOL):
    """Ascending eigenvalues and column eigenvectors of a Hermitian operator."""
    err = op.hermiticity_error()
    if err > tol:
        raise ValueError(f"operator is not Hermitian (max|M - M^dag| = {err:.3g})")
    m = 0.5 * (op.matrix + op.matrix.conj().T)
    evals, evecs = np.linalg.eigh(m)
    return evals, evecs
