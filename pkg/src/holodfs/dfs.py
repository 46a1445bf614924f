"""Decoherence-free-subspace encodings of one and two logical qubits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .operators import HilbertSpace, StateVector, basis_ket


@dataclass(frozen=True, eq=False)
class DfsBasis:
    space: HilbertSpace
    labels: tuple[str, ...]
    occupations: tuple[tuple[int, ...], ...]
    computational: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.occupations):
            raise ValueError("one occupation tuple per label")
        missing = set(self.computational) - set(self.labels)
        if missing:
            raise ValueError(f"computational labels {missing} not in basis")

    def ket(self, label: str) -> StateVector:
        return basis_ket(self.space, self.occupations[self.labels.index(label)])

    def index(self, label: str) -> int:
        return self.space.flat_index(self.occupations[self.labels.index(label)])

    def indices(self, labels: Sequence[str] | None = None) -> np.ndarray:
        labels = self.computational if labels is None else labels
        return np.array([self.index(lab) for lab in labels])

    def kets(self) -> list[StateVector]:
        return [self.ket(lab) for lab in self.labels]


def single_qubit_dfs(space: HilbertSpace) -> DfsBasis:
    """{|0>_L, |1>_L, |E>_L} = {|100>, |010>, |001>} over (q1, q2, c)."""
    if tuple(space.labels) != ("q1", "q2", "c"):
        raise ValueError("single-qubit DFS needs space (q1, q2, c)")
    return DfsBasis(space, ("0", "1", "E"), ((1, 0, 0), (0, 1, 0), (0, 0, 1)), ("0", "1"))


def two_qubit_dfs(space: HilbertSpace) -> DfsBasis:
    """Four logical states plus the ancillas |a1> = |110000>, |a2> = |000110>."""
    if tuple(space.labels) != ("q1", "q2", "c1", "q3", "q4", "c2"):
        raise ValueError("two-qubit DFS needs space (q1, q2, c1, q3, q4, c2)")
    occ = (
        (1, 0, 0, 1, 0, 0),
        (1, 0, 0, 0, 1, 0),
        (0, 1, 0, 1, 0, 0),
        (0, 1, 0, 0, 1, 0),
        (1, 1, 0, 0, 0, 0),
        (0, 0, 0, 1, 1, 0),
    )
    return DfsBasis(space, ("00", "01", "10", "11", "a1", "a2"), occ, ("00", "01", "10", "11"))
