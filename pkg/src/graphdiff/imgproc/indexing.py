"""Ring indexing and the sin(theta)-versus-wavelength check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import constants as C
from ..beamline import Beam, de_broglie
from ..lattice import ReciprocalLattice, enumerate_rings


class InsufficientPeaks(ValueError):
    pass


@dataclass
class AssignedPeak:
    theta_mrad: float
    ratio: float
    loeschian: int
    residual_mrad: float


@dataclass
class PeakAssignment:
    peaks: list
    wavelength_fm: float
    energy_eV: float
    species: str
    nominal_energy_eV: float
    wavelength_stderr_fm: float = float("nan")
    unmatched_mrad: list = field(default_factory=list)

    @property
    def nominal_wavelength_fm(self) -> float:
        return de_broglie(Beam.of(self.species, self.nominal_energy_eV)) * 1e15

    def to_dict(self) -> dict:
        return {
            "species": self.species,
            "nominal_energy_eV": self.nominal_energy_eV,
            "nominal_wavelength_fm": self.nominal_wavelength_fm,
            "fitted_wavelength_fm": self.wavelength_fm,
            "fitted_wavelength_stderr_fm": self.wavelength_stderr_fm,
            "fitted_energy_eV": self.energy_eV,
            "peaks": [
                {
                    "theta_mrad": p.theta_mrad,
                    "L": p.loeschian,
                    "ratio": p.ratio,
                    "residual_mrad": p.residual_mrad,
                }
                for p in self.peaks
            ],
            "unmatched_mrad": list(self.unmatched_mrad),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PeakAssignment":
        return cls(
            peaks=[
                AssignedPeak(p["theta_mrad"], p["ratio"], p["L"], p["residual_mrad"]) for p in d["peaks"]
            ],
            wavelength_fm=d["fitted_wavelength_fm"],
            energy_eV=d["fitted_energy_eV"],
            species=d["species"],
            nominal_energy_eV=d["nominal_energy_eV"],
            wavelength_stderr_fm=d.get("fitted_wavelength_stderr_fm", float("nan")),
            unmatched_mrad=d.get("unmatched_mrad", []),
        )


def _match(theta, lam, rings, g1, tol, ambiguity=2.0):
    """Nearest-ring matching; each ring takes at most its closest peak.

    A peak with a second predicted ring within ``ambiguity * tol`` sits on
    an unresolved blend and is left unassigned.
    """
    s_pred = np.array([r.ratio for r in rings]) * g1 * lam / (2 * math.pi)
    valid = s_pred < 1
    pred = np.full(s_pred.shape, np.inf)
    pred[valid] = np.arcsin(s_pred[valid])
    best = {}
    for i, t in enumerate(theta):
        dist = np.abs(pred - t)
        j = int(np.argmin(dist))
        d = dist[j]
        second = np.partition(dist, 1)[1] if dist.size > 1 else np.inf
        if d <= tol and second > ambiguity * tol and (j not in best or d < best[j][1]):
            best[j] = (i, d)
    return {i: j for j, (i, _) in best.items()}


def _fit_lambda(theta, ratios, g1):
    """Least squares of sin(theta_i) = ratio_i |G1| lambda / 2 pi through the origin."""
    s = np.sin(theta)
    x = np.asarray(ratios) * g1 / (2 * math.pi)
    lam = float(s @ x / (x @ x))
    if len(s) > 1:
        resid = s - x * lam
        stderr = float(math.sqrt(resid @ resid / (len(s) - 1) / (x @ x)))
    else:
        stderr = float("nan")
    return lam, stderr


def _bootstrap(theta, lam, rings, g1, tol, ambiguity):
    for n in range(1, theta.size + 1):
        m = _match(theta[:n], lam, rings, g1, tol, ambiguity)
        if len(m) >= 2:
            lam, _ = _fit_lambda(theta[list(m)], [rings[j].ratio for j in m.values()], g1)
    for _ in range(10):
        m = _match(theta, lam, rings, g1, tol, ambiguity)
        if len(m) < 2:
            break
        new, _ = _fit_lambda(theta[list(m)], [rings[j].ratio for j in m.values()], g1)
        converged = abs(new - lam) <= 1e-12 * lam
        lam = new
        if converged:
            break
    return _match(theta, lam, rings, g1, tol, ambiguity), lam


def assign_rings(
    peaks_mrad,
    beam: Beam,
    rl: ReciprocalLattice,
    tolerance_mrad: float = 0.2,
    max_ratio: float = 12.0,
    ambiguity: float = 2.0,
) -> PeakAssignment:
    """Index peak angles against the ring system and fit the wavelength.

    Peaks are added innermost first, refitting the wavelength after each
    so that a nominal energy off by several percent still indexes the
    outer rings correctly. A final pass rematches every peak with the
    fitted wavelength.
    """
    theta = np.sort(np.asarray(peaks_mrad, dtype=float)) * 1e-3
    tol = tolerance_mrad * 1e-3
    rings = enumerate_rings(rl, max_ratio).rings
    g1 = rl.magnitude
    lam0 = de_broglie(beam)

    m, lam = _bootstrap(theta, lam0, rings, g1, tol, ambiguity)
    if len(m) < 2 and ambiguity > 0:
        # everything blended: fall back to plain nearest-ring matching
        m, lam = _bootstrap(theta, lam0, rings, g1, tol, 0.0)
    if len(m) < 2:
        raise InsufficientPeaks(f"only {len(m)} peak(s) matched a ring; need at least 2")
    lam, stderr = _fit_lambda(theta[list(m)], [rings[j].ratio for j in m.values()], g1)

    assigned = []
    for i in sorted(m):
        ring = rings[m[i]]
        pred = math.asin(ring.ratio * g1 * lam / (2 * math.pi))
        assigned.append(AssignedPeak(theta[i] * 1e3, ring.ratio, ring.loeschian, (theta[i] - pred) * 1e3))
    unmatched = [float(theta[i] * 1e3) for i in range(theta.size) if i not in m]
    energy = (C.PLANCK_H / lam) ** 2 / (2 * beam.species.mass) / C.EV
    return PeakAssignment(
        peaks=assigned,
        wavelength_fm=lam * 1e15,
        energy_eV=energy,
        species=beam.species.value,
        nominal_energy_eV=beam.energy,
        wavelength_stderr_fm=stderr * 1e15,
        unmatched_mrad=unmatched,
    )


@dataclass
class DiffractionLine:
    species: str
    loeschian: int
    ratio: float
    wavelength_fm: np.ndarray
    sin_theta: np.ndarray
    slope: float = float("nan")  # per metre
    intercept: float = float("nan")
    slope_stderr: float = float("nan")
    intercept_stderr: float = float("nan")
    expected_slope: float = float("nan")

    @property
    def determined(self) -> bool:
        return np.isfinite(self.slope)

    @property
    def slope_error(self) -> float:
        return self.slope / self.expected_slope - 1.0


def diffraction_lines(assignments, rl: ReciprocalLattice, min_points: int = 3) -> list[DiffractionLine]:
    """Straight-line fits of sin(theta) against the nominal wavelength, per species and ring.

    Lines with fewer than ``min_points`` energies are returned as points
    only (slope nan).
    """
    groups: dict = {}
    for a in assignments:
        lam = a.nominal_wavelength_fm
        for p in a.peaks:
            key = (a.species, p.loeschian)
            groups.setdefault(key, []).append((lam, math.sin(p.theta_mrad * 1e-3)))
    lines = []
    for (species, L), pts in sorted(groups.items()):
        pts.sort()
        lam = np.array([p[0] for p in pts])
        s = np.array([p[1] for p in pts])
        ratio = math.sqrt(L)
        line = DiffractionLine(species, L, ratio, lam, s, expected_slope=ratio * rl.magnitude / (2 * math.pi))
        if len(np.unique(lam)) >= min_points:
            x = lam * 1e-15
            X = np.column_stack([x, np.ones_like(x)])
            coef, *_ = np.linalg.lstsq(X, s, rcond=None)
            resid = s - X @ coef
            dof = len(s) - 2
            s2 = resid @ resid / dof if dof > 0 else float("nan")
            cov = s2 * np.linalg.inv(X.T @ X)
            line.slope, line.intercept = float(coef[0]), float(coef[1])
            line.slope_stderr = float(math.sqrt(cov[0, 0]))
            line.intercept_stderr = float(math.sqrt(cov[1, 1]))
        lines.append(line)
    return lines
