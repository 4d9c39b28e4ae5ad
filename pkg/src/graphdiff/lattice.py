"""Graphene direct/reciprocal lattice and the Debye-Scherrer ring system."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import GRAPHENE_LATTICE_CONSTANT

# Fractional coordinates of the two carbons in the 120-degree basis.
HONEYCOMB_BASIS = ((1.0 / 3.0, 2.0 / 3.0), (2.0 / 3.0, 1.0 / 3.0))


@dataclass(frozen=True)
class DirectLattice:
    """Hexagonal 2D lattice.

    The direct basis is ``a1 = a (1, 0)`` and ``a2 = a (-1/2, sqrt(3)/2)``,
    which puts the reciprocal vectors at 60 degrees to each other. With
    that choice the origin sits on a hexagon centre of the honeycomb.
    """

    a: float = GRAPHENE_LATTICE_CONSTANT
    atom_basis: tuple = HONEYCOMB_BASIS

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"lattice constant must be positive, got {self.a!r}")
        if len(self.atom_basis) != 2:
            raise ValueError("graphene honeycomb needs exactly two basis atoms")

    @property
    def vectors(self) -> np.ndarray:
        """Rows are a1 and a2 in metres."""
        return self.a * np.array([[1.0, 0.0], [-0.5, math.sqrt(3.0) / 2.0]])

    def cartesian(self, frac) -> np.ndarray:
        return np.asarray(frac, dtype=float) @ self.vectors


@dataclass(frozen=True)
class ReciprocalLattice:
    G1: np.ndarray
    G2: np.ndarray

    @property
    def magnitude(self) -> float:
        return float(np.hypot(*self.G1))

    def vector(self, n1: int, n2: int) -> np.ndarray:
        return n1 * self.G1 + n2 * self.G2


@dataclass(frozen=True)
class Ring:
    loeschian: int
    ratio: float
    multiplicity: int

    def magnitude(self, rl: ReciprocalLattice) -> float:
        return self.ratio * rl.magnitude


@dataclass(frozen=True)
class RingSystem:
    rings: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.rings)

    def __iter__(self):
        return iter(self.rings)

    def __getitem__(self, i):
        return self.rings[i]

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rings])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L", "ratio", "multiplicity"])
        for r in self.rings:
            w.writerow([r.loeschian, repr(r.ratio), r.multiplicity])
        return buf.getvalue()


def reciprocal_basis(lat: DirectLattice) -> ReciprocalLattice:
    """Reciprocal vectors with ``Gi . aj = 2 pi delta_ij``."""
    if not lat.a > 0:
        raise ValueError("lattice constant must be positive")
    A = lat.vectors
    B = 2.0 * math.pi * np.linalg.inv(A).T
    return ReciprocalLattice(G1=B[0], G2=B[1])


def loeschian(n1: int, n2: int) -> int:
    return n1 * n1 + n1 * n2 + n2 * n2


def enumerate_rings(rl: ReciprocalLattice, max_ratio: float) -> RingSystem:
    """All distinct ring magnitudes ``|n1 G1 + n2 G2| <= max_ratio |G1|``.

    Rings are keyed by the integer ``L = n1^2 + n1 n2 + n2^2`` so two
    index pairs land on the same ring only when their L match exactly.
    Returns an empty system for ``max_ratio < 1``.
    """
    if max_ratio < 1:
        return RingSystem(())
    limit = max_ratio * max_ratio
    # |n1 G1 + n2 G2|^2 >= (3/4) max(|n1|,|n2|)^2 |G1|^2
    nmax = int(math.ceil(max_ratio * 2.0 / math.sqrt(3.0))) + 1
    counts: dict[int, int] = {}
    for n1 in range(-nmax, nmax + 1):
        for n2 in range(-nmax, nmax + 1):
            if n1 == 0 and n2 == 0:
                continue
            q = loeschian(n1, n2)
            if q <= limit + 1e-9:
                counts[q] = counts.get(q, 0) + 1
    rings = tuple(Ring(q, math.sqrt(q), counts[q]) for q in sorted(counts))
    return RingSystem(rings)
