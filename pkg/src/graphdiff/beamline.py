"""Beam kinematics, diffraction angles and the coherence/collimation budget."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from . import constants as C
from .lattice import DirectLattice, ReciprocalLattice, Ring, RingSystem


class NonDiffractingOrder(ValueError):
    """Requested order has |G| >= k and is evanescent."""


class Species(Enum):
    H = "H"
    He = "He"

    @property
    def mass(self) -> float:
        return C.MASS_H if self is Species.H else C.MASS_HE

    @property
    def atomic_number(self) -> int:
        return C.ATOMIC_NUMBER[self.value]

    @property
    def default_energy_fwhm(self) -> float:
        """Measured ion-gun energy spread in eV."""
        return 24.0 if self is Species.H else 18.0

    @classmethod
    def parse(cls, name) -> "Species":
        if isinstance(name, cls):
            return name
        key = str(name).strip()
        for s in cls:
            if s.value.lower() == key.lower():
                return s
        raise ValueError(f"unknown species {name!r}; expected H or He")


@dataclass(frozen=True)
class Beam:
    species: Species
    energy: float  # eV
    energy_fwhm: float = 0.0  # eV

    def __post_init__(self):
        if not self.energy > 0:
            raise ValueError(f"beam energy must be positive, got {self.energy!r} eV")
        if self.energy_fwhm < 0:
            raise ValueError("energy_fwhm must be >= 0")

    @classmethod
    def of(cls, species, energy, energy_fwhm=None) -> "Beam":
        sp = Species.parse(species)
        fwhm = sp.default_energy_fwhm if energy_fwhm is None else energy_fwhm
        return cls(sp, float(energy), float(fwhm))


@dataclass(frozen=True)
class BeamlineGeometry:
    s0: float = 1e-3
    s1: float = 500e-6
    s2: float = 200e-6
    L: float = 0.790
    detector_distance: float = 0.727
    detector_diameter: float = 0.075

    def __post_init__(self):
        for name in ("s0", "s1", "s2", "L", "detector_distance", "detector_diameter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        # equality s2 == s1 is allowed: the high-resolution setting uses 200/200 um
        if not (self.s2 <= self.s1 <= self.s0):
            raise ValueError("pinholes must satisfy s2 <= s1 <= s0")


@dataclass(frozen=True)
class CoherenceBudget:
    transverse: float  # m
    longitudinal: float  # m, inf for a monochromatic beam
    collimation: float  # rad
    wavelength: float  # m

    @property
    def longitudinal_over_lambda(self) -> float:
        return self.longitudinal / self.wavelength

    def transverse_over(self, a: float) -> float:
        return self.transverse / a


def de_broglie(beam: Beam) -> float:
    """de Broglie wavelength h / sqrt(2 m E) in metres."""
    if not beam.energy > 0:
        raise ValueError(f"beam energy must be positive, got {beam.energy!r} eV")
    return C.PLANCK_H / math.sqrt(2.0 * beam.species.mass * beam.energy * C.EV)


def wavevector(beam: Beam) -> float:
    return 2.0 * math.pi / de_broglie(beam)


def diffraction_angle(beam: Beam, ring, rl: ReciprocalLattice) -> float:
    """Polar angle of a ring from ``sin(theta) = |G| / k``.

    ``ring`` is a :class:`Ring` or a bare magnitude ratio ``|G|/|G1|``.
    """
    ratio = ring.ratio if isinstance(ring, Ring) else float(ring)
    s = ratio * rl.magnitude / wavevector(beam)
    if s >= 1.0:
        raise NonDiffractingOrder(f"|G| = {ratio:g}|G1| exceeds k; order is evanescent")
    return math.asin(s)


def ring_angles(beam: Beam, rings: RingSystem, rl: ReciprocalLattice) -> list[float]:
    out = []
    for r in rings:
        try:
            out.append(diffraction_angle(beam, r, rl))
        except NonDiffractingOrder:
            break
    return out


def coherence_budget(beam: Beam, geom: BeamlineGeometry) -> CoherenceBudget:
    lam = de_broglie(beam)
    lt = 2.0 * geom.L * lam / geom.s1
    if beam.energy_fwhm == 0:
        ll = math.inf
    else:
        # first-order propagation of lambda ~ E^-1/2
        dlam = lam * beam.energy_fwhm / (2.0 * beam.energy)
        ll = lam * lam / dlam
    phi = (geom.s1 + geom.s2) / geom.L
    return CoherenceBudget(lt, ll, phi, lam)


# Energy lost in the charge-exchange cell, eV. He+ on He is resonant.
_NEUTRALIZATION_LOSS = {Species.H: 2.6, Species.He: 0.0}


def neutralization_shift(species) -> float:
    return _NEUTRALIZATION_LOSS[Species.parse(species)]


def neutralized(beam: Beam) -> Beam:
    """Beam after charge exchange (energy reduced by the neutralization loss)."""
    return Beam(beam.species, beam.energy - neutralization_shift(beam.species), beam.energy_fwhm)


def budget_report(
    beam: Beam,
    geom: BeamlineGeometry,
    lattice: DirectLattice | None = None,
    max_ratio: float = 8.0,
) -> dict:
    """JSON-ready budget: wavelength, k, ring angles and coherence figures."""
    from .lattice import enumerate_rings, reciprocal_basis

    lattice = lattice or DirectLattice()
    rl = reciprocal_basis(lattice)
    rings = enumerate_rings(rl, max_ratio)
    angles = ring_angles(beam, rings, rl)
    cb = coherence_budget(beam, geom)
    lt_over_a = cb.transverse_over(lattice.a)
    ll_over = cb.longitudinal_over_lambda
    return {
        "species": beam.species.value,
        "energy_eV": beam.energy,
        "lambda_fm": de_broglie(beam) * 1e15,
        "k_per_m": wavevector(beam),
        "G1_per_m": rl.magnitude,
        "ring_ratios": [r.ratio for r in rings.rings[: len(angles)]],
        "ring_angles_mrad": [t * 1e3 for t in angles],
        "coherence": {
            "lt_m": cb.transverse,
            "lt_over_a": lt_over_a,
            "ll_over_lambda": None if math.isinf(ll_over) else ll_over,
            "phi_mrad": cb.collimation * 1e3,
        },
        "flags": {
            "lt_below_5a": lt_over_a < 5.0,
            "ll_below_50_lambda": ll_over < 50.0,
        },
    }
