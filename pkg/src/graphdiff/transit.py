"""Classical transit of a fast atom through free-standing graphene.

The projectile and the carbons of a finite supercell are integrated with
velocity-Verlet under a pairwise screened-Coulomb (ZBL) repulsion. Carbons
start at rest and only feel the projectile. Electronic stopping is not part
of the dynamics; it is looked up from a :class:`StoppingTable` and reported
next to the nuclear loss.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import constants as C
from .beamline import Beam, Species
from .lattice import DirectLattice

ANGSTROM = 1e-10
ATTOSECOND = 1e-18

# Universal ZBL screening function
ZBL_COEFFS = (0.18175, 0.50986, 0.28022, 0.02817)
ZBL_EXPONENTS = (3.19980, 0.94229, 0.40290, 0.20162)


class IntegrationError(RuntimeError):
    """Energy drift of a conservative run exceeded the allowed fraction of E."""


class NoTransmission(ValueError):
    """Observable needs a trajectory that crossed the interaction region."""


@dataclass(frozen=True)
class Supercell:
    nx: int = 6
    ny: int = 6
    lattice: DirectLattice = field(default_factory=DirectLattice)
    carbon_mass: float = C.MASS_C

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("supercell repetitions must be >= 1")

    @property
    def positions(self) -> np.ndarray:
        """Carbon positions (N, 3), origin on the hexagon centre nearest the middle."""
        frac = []
        for i in range(self.nx):
            for j in range(self.ny):
                for b in self.lattice.atom_basis:
                    frac.append((i + b[0] - self.nx // 2, j + b[1] - self.ny // 2))
        xy = self.lattice.cartesian(frac)
        return np.column_stack([xy, np.zeros(len(xy))])

    @property
    def n_atoms(self) -> int:
        return 2 * self.nx * self.ny


@dataclass(frozen=True)
class PotentialModel:
    """Pairwise projectile-carbon repulsion.

    ``kind="screened-coulomb"`` uses the universal ZBL form; ``parameters``
    may override ``coeffs``, ``exponents`` or ``screening_length`` (m).
    ``kind="user-table"`` takes ``parameters={"r": [...], "V": [...]}`` in
    metres and joules and interpolates with a cubic spline.
    Both are shifted-force truncated, so V and dV/dr vanish at the cutoff.
    """

    kind: str = "screened-coulomb"
    parameters: dict = field(default_factory=dict)
    cutoff: float = 4.5 * ANGSTROM

    def __post_init__(self):
        if self.kind not in ("screened-coulomb", "user-table"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")

    def pair(self, z1: int, z2: int = 6) -> "PairPotential":
        if self.kind == "user-table":
            return _TablePair(self.parameters["r"], self.parameters["V"], self.cutoff)
        p = self.parameters
        a = p.get("screening_length") or 0.88534 * C.BOHR_RADIUS / (z1**0.23 + z2**0.23)
        return _ZBLPair(
            z1 * z2 * C.COULOMB_E2,
            a,
            tuple(p.get("coeffs", ZBL_COEFFS)),
            tuple(p.get("exponents", ZBL_EXPONENTS)),
            self.cutoff,
        )


class PairPotential:
    cutoff: float

    def raw(self, r):
        raise NotImplementedError

    def energy_and_derivative(self, r):
        """Shifted-force V(r) and dV/dr for r < cutoff (zero beyond)."""
        v, dv = self.raw(r)
        inside = r < self.cutoff
        v = np.where(inside, v - self._vc - (r - self.cutoff) * self._dvc, 0.0)
        dv = np.where(inside, dv - self._dvc, 0.0)
        return v, dv

    def _init_shift(self):
        vc, dvc = self.raw(np.array([self.cutoff]))
        self._vc, self._dvc = float(vc[0]), float(dvc[0])


class _ZBLPair(PairPotential):
    def __init__(self, prefactor, a, coeffs, exponents, cutoff):
        self.prefactor = prefactor
        self.a = a
        self.coeffs = np.asarray(coeffs)
        self.exponents = np.asarray(exponents)
        self.cutoff = cutoff
        self._init_shift()

    def raw(self, r):
        r = np.asarray(r, dtype=float)
        x = r[..., None] / self.a
        e = self.coeffs * np.exp(-self.exponents * x)
        phi = e.sum(-1)
        dphi = -(self.exponents * e).sum(-1) / self.a
        v = self.prefactor * phi / r
        dv = self.prefactor * (dphi / r - phi / (r * r))
        return v, dv


class _TablePair(PairPotential):
    def __init__(self, r, v, cutoff):
        self._spline = CubicSpline(np.asarray(r, float), np.asarray(v, float))
        self._dspline = self._spline.derivative()
        self.cutoff = cutoff
        self._init_shift()

    def raw(self, r):
        r = np.asarray(r, dtype=float)
        return self._spline(r), self._dspline(r)


@dataclass(frozen=True)
class TransitConfig:
    impact_point: tuple = (0.0, 0.0)  # fractional, relative to a hexagon centre
    start_height: float = 6.0 * ANGSTROM
    timestep: float = 15.0 * ATTOSECOND
    interaction_halfwidth: float = 1.7 * ANGSTROM
    start_below: bool = False
    energy_tolerance: float = 1e-4
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not self.timestep > 0:
            raise ValueError("timestep must be positive")
        if not self.start_height > self.interaction_halfwidth > 0:
            raise ValueError("need start_height > interaction_halfwidth > 0")

    def impact_xy(self, lattice: DirectLattice) -> np.ndarray:
        return lattice.cartesian(self.impact_point)

    @classmethod
    def displaced(cls, dx: float, dy: float = 0.0, lattice: DirectLattice | None = None, **kw):
        """Config whose impact point is (dx, dy) metres from the hexagon centre."""
        lattice = lattice or DirectLattice()
        frac = np.linalg.solve(lattice.vectors.T, np.array([dx, dy]))
        return cls(impact_point=(float(frac[0]), float(frac[1])), **kw)


@dataclass
class Trajectory:
    t: np.ndarray  # (S,)
    position: np.ndarray  # (S, 3) projectile
    velocity: np.ndarray  # (S, 3) projectile
    carbon_momentum: np.ndarray  # (S, N, 3)
    total_energy: np.ndarray  # (S,) J

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_fs", "x_A", "y_A", "z_A", "vx_m_s", "vy_m_s", "vz_m_s", "E_total_eV"])
        for i in range(len(self.t)):
            x, y, z = self.position[i] / ANGSTROM
            vx, vy, vz = self.velocity[i]
            w.writerow(
                [f"{self.t[i] * 1e15:.6f}", f"{x:.6f}", f"{y:.6f}", f"{z:.6f}",
                 f"{vx:.6e}", f"{vy:.6e}", f"{vz:.6e}", f"{self.total_energy[i] / C.EV:.9f}"]
            )
        return buf.getvalue()


@dataclass
class TransitResult:
    species: Species
    energy: float  # eV
    transmitted: bool
    reflected: bool
    delta_p_net: float
    delta_p_per_atom: float
    interaction_time: float  # s, nan unless transmitted
    energy_loss_nuclear: float  # eV
    energy_loss_electronic: float  # eV
    energy_drift: float  # max |E(t) - E(0)| / E
    nearest: np.ndarray  # indices of the hexagon atoms around the impact site
    projectile_dp: np.ndarray  # lateral momentum change of the projectile
    trajectory: Trajectory

    @property
    def delta_p(self) -> float:
        return self.delta_p_per_atom


def _hexagon_atoms(cell: Supercell, impact_xy: np.ndarray) -> np.ndarray:
    """Indices of the six carbons of the hexagon containing the impact point."""
    lat = cell.lattice
    frac = np.linalg.solve(lat.vectors.T, impact_xy)
    base = np.floor(frac)
    best, best_d = None, np.inf
    for di in (0, 1):
        for dj in (0, 1):
            centre = lat.cartesian(base + (di, dj))
            d = np.hypot(*(centre - impact_xy))
            if d < best_d:
                best, best_d = centre, d
    pos = cell.positions[:, :2]
    d = np.hypot(*(pos - best).T)
    bond = lat.a / math.sqrt(3.0)
    return np.flatnonzero(d < 1.01 * bond)


def _crossing_time(t, z, level):
    """First time z falls through ``level`` (linear interpolation), else None."""
    below = z < level
    idx = np.flatnonzero(below[1:] & ~below[:-1])
    if idx.size == 0:
        return None, None
    i = idx[0]
    frac = (z[i] - level) / (z[i] - z[i + 1])
    return t[i] + frac * (t[i + 1] - t[i]), (i, frac)


def simulate_transit(
    beam: Beam,
    cell: Supercell | None = None,
    pot: PotentialModel | None = None,
    cfg: TransitConfig | None = None,
    stopping: "StoppingTable | None" = None,
) -> TransitResult:
    """Integrate one normal-incidence transit with velocity-Verlet.

    The run ends once the projectile is ``start_height`` below the plane or
    has been reflected back above it. Reflection is reported through
    ``transmitted=False`` rather than raised.
    """
    cell = cell or Supercell()
    pot = pot or PotentialModel()
    cfg = cfg or TransitConfig()
    pair = pot.pair(beam.species.atomic_number)

    m_p = beam.species.mass
    m_c = cell.carbon_mass
    e0 = beam.energy * C.EV
    v0 = math.sqrt(2.0 * e0 / m_p)
    dt = cfg.timestep
    h = cfg.start_height

    impact = cfg.impact_xy(cell.lattice)
    xp = np.array([impact[0], impact[1], -h if cfg.start_below else h])
    vp = np.array([0.0, 0.0, -v0])
    xc = cell.positions.copy()
    vc = np.zeros_like(xc)

    def forces(xp, xc):
        d = xp - xc
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        v, dv = pair.energy_and_derivative(r)
        f = (-dv / np.where(r > 0, r, 1.0))[:, None] * d  # force on projectile from each carbon
        return f.sum(0), -f, v.sum()

    fp, fc, epot = forces(xp, xc)
    ts, xs, vs, pcs, es = [0.0], [xp.copy()], [vp.copy()], [m_c * vc], []
    es.append(0.5 * m_p * vp @ vp + epot)

    steps = 0
    while True:
        vp += 0.5 * dt * fp / m_p
        vc += 0.5 * dt * fc / m_c
        xp += dt * vp
        xc += dt * vc
        fp, fc, epot = forces(xp, xc)
        vp += 0.5 * dt * fp / m_p
        vc += 0.5 * dt * fc / m_c
        steps += 1
        ts.append(steps * dt)
        xs.append(xp.copy())
        vs.append(vp.copy())
        pcs.append(m_c * vc)
        es.append(0.5 * m_p * vp @ vp + 0.5 * m_c * np.einsum("ij,ij->", vc, vc) + epot)
        if xp[2] < -h or (xp[2] > h and vp[2] > 0):
            break
        if steps >= cfg.max_steps:
            raise IntegrationError(f"transit did not finish within {cfg.max_steps} steps")

    traj = Trajectory(np.array(ts), np.array(xs), np.array(vs), np.array(pcs), np.array(es))
    drift = float(np.max(np.abs(traj.total_energy - traj.total_energy[0])) / e0)
    if drift > cfg.energy_tolerance:
        raise IntegrationError(
            f"energy drift {drift:.2e} of E exceeds {cfg.energy_tolerance:.0e} (dt={dt:.3g} s)"
        )

    nearest = _hexagon_atoms(cell, impact)
    hw = cfg.interaction_halfwidth
    z = traj.position[:, 2]
    t_in, _ = _crossing_time(traj.t, z, hw)
    t_out, where = _crossing_time(traj.t, z, -hw)
    transmitted = not cfg.start_below and xp[2] < -h and t_in is not None and t_out is not None
    reflected = xp[2] > h and vp[2] > 0

    if transmitted:
        i, frac = where
        p_lat = (1 - frac) * traj.carbon_momentum[i] + frac * traj.carbon_momentum[i + 1]
    else:
        p_lat = traj.carbon_momentum[-1]
    p_lat = p_lat[nearest, :2]
    dp_net = float(np.hypot(*p_lat.sum(0)))
    dp_atom = float(np.mean(np.hypot(p_lat[:, 0], p_lat[:, 1])))

    e_nuc = (e0 - 0.5 * m_p * vp @ vp) / C.EV
    e_el = electronic_loss(beam, stopping) if stopping is not None else 0.0
    return TransitResult(
        species=beam.species,
        energy=beam.energy,
        transmitted=transmitted,
        reflected=reflected,
        delta_p_net=dp_net,
        delta_p_per_atom=dp_atom,
        interaction_time=(t_out - t_in) if transmitted else math.nan,
        energy_loss_nuclear=float(e_nuc),
        energy_loss_electronic=float(e_el),
        energy_drift=drift,
        nearest=nearest,
        projectile_dp=m_p * (vp[:2] - traj.velocity[0, :2]),
        trajectory=traj,
    )


def momentum_transfer(res: TransitResult, cell: Supercell | None = None, per_atom: bool = False) -> float:
    """Lateral momentum handed to the hexagon atoms around the impact site.

    By default the magnitude of their vector sum; ``per_atom=True`` gives
    the mean per-atom magnitude, which survives the cancellation at a
    symmetric hexagon-centre impact.
    """
    return res.delta_p_per_atom if per_atom else res.delta_p_net


def interaction_time(res: TransitResult, cfg: TransitConfig | None = None) -> float:
    """Time spent between z = +halfwidth and z = -halfwidth, in seconds."""
    cfg = cfg or TransitConfig()
    if not res.transmitted:
        raise NoTransmission("interaction time is defined only for transmitted projectiles")
    z = res.trajectory.position[:, 2]
    t_in, _ = _crossing_time(res.trajectory.t, z, cfg.interaction_halfwidth)
    t_out, _ = _crossing_time(res.trajectory.t, z, -cfg.interaction_halfwidth)
    if t_in is None or t_out is None:
        raise NoTransmission("trajectory does not span the requested interaction region")
    return t_out - t_in


def free_flight_time(beam: Beam, halfwidth: float = 1.7 * ANGSTROM) -> float:
    """Undecelerated crossing time of the slab; a lower bound on interaction_time."""
    return 2.0 * halfwidth / math.sqrt(2.0 * beam.energy * C.EV / beam.species.mass)


class Coherence(str, Enum):
    COHERENT = "coherent"
    DECOHERING = "decohering"


@dataclass(frozen=True)
class DecoherenceCriterion:
    p0: float = 2.1e-23  # kg m/s
    carbon_mass: float = C.MASS_C

    def __post_init__(self):
        if not self.p0 > 0:
            raise ValueError("p0 must be positive")

    @property
    def rms_speed(self) -> float:
        return self.p0 / self.carbon_mass


def decoherence_check(dp: float, crit: DecoherenceCriterion | None = None) -> Coherence:
    crit = crit or DecoherenceCriterion()
    if dp < 0:
        raise ValueError("momentum transfer must be >= 0")
    return Coherence.COHERENT if dp < crit.p0 else Coherence.DECOHERING


@dataclass(frozen=True)
class StoppingPoint:
    species: Species
    energy: float  # eV
    loss: float  # eV
    approximate: bool = False
    tolerance: float = 0.0  # eV


@dataclass(frozen=True)
class StoppingTable:
    points: tuple = ()

    def for_species(self, species) -> list[StoppingPoint]:
        sp = Species.parse(species)
        return sorted((p for p in self.points if p.species is sp), key=lambda p: p.energy)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["species", "energy_eV", "loss_eV", "approximate", "tolerance_eV"])
        for p in self.points:
            w.writerow([p.species.value, p.energy, p.loss, int(p.approximate), p.tolerance])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "StoppingTable":
        rows = csv.DictReader(io.StringIO(text))
        pts = [
            StoppingPoint(
                Species.parse(r["species"]),
                float(r["energy_eV"]),
                float(r["loss_eV"]),
                r.get("approximate", "0").strip() in ("1", "true", "True"),
                float(r.get("tolerance_eV") or 0.0),
            )
            for r in rows
        ]
        return cls(tuple(pts))


def default_stopping_table() -> StoppingTable:
    """Electronic energy-loss anchors.

    H at 1.5 keV is a firm value. The He entries only pin the shape of the
    curve (a minimum near 250 eV, a few eV at 1.5 keV) and are flagged
    approximate.
    """
    return StoppingTable(
        (
            StoppingPoint(Species.H, 1500.0, 16.0),
            StoppingPoint(Species.He, 30.0, 1.5, True, 1.0),
            StoppingPoint(Species.He, 250.0, 0.5, True, 0.5),
            StoppingPoint(Species.He, 1500.0, 4.0, True, 2.0),
        )
    )


def electronic_loss(beam: Beam, model: StoppingTable | None = None) -> float:
    """Electronic loss in eV, linear between anchors and clamped at the ends."""
    model = default_stopping_table() if model is None else model
    pts = model.for_species(beam.species)
    if not pts:
        raise ValueError(f"stopping table has no entries for {beam.species.value}")
    e = np.array([p.energy for p in pts])
    loss = np.array([p.loss for p in pts])
    return float(np.interp(beam.energy, e, loss))


FIG1_ENERGIES = (30.0, 60.0, 120.0, 250.0, 500.0, 1000.0, 1500.0)

SCAN_COLUMNS = (
    "species",
    "energy_eV",
    "delta_p_net",
    "delta_p_per_atom",
    "interaction_time_fs",
    "e_loss_nuclear_eV",
    "e_loss_electronic_eV",
    "coherent_flag",
)


def _scan_one(args):
    species, energy, cell, pot, cfg, stopping = args
    res = simulate_transit(Beam.of(species, energy), cell, pot, cfg, stopping)
    res.trajectory = None  # keep the payload small across processes
    return res


def energy_scan(
    species,
    energies: Sequence[float] = FIG1_ENERGIES,
    cell: Supercell | None = None,
    pot: PotentialModel | None = None,
    cfg: TransitConfig | None = None,
    stopping: StoppingTable | None = None,
    crit: DecoherenceCriterion | None = None,
    workers: int = 1,
) -> list[dict]:
    """One scan row per energy, ordered by energy."""
    jobs = [(species, float(e), cell, pot, cfg, stopping) for e in energies]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_scan_one, jobs))
    else:
        results = [_scan_one(j) for j in jobs]
    return [scan_row(res, crit) for res in sorted(results, key=lambda r: r.energy)]


def scan_row(res: TransitResult, crit: DecoherenceCriterion | None = None) -> dict:
    return {
        "species": res.species.value,
        "energy_eV": res.energy,
        "delta_p_net": res.delta_p_net,
        "delta_p_per_atom": res.delta_p_per_atom,
        "interaction_time_fs": res.interaction_time * 1e15,
        "e_loss_nuclear_eV": res.energy_loss_nuclear,
        "e_loss_electronic_eV": res.energy_loss_electronic,
        "coherent_flag": int(decoherence_check(res.delta_p_per_atom, crit) is Coherence.COHERENT),
    }


def scan_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for r in rows:
        w.writerow(
            [
                r["species"],
                f"{r['energy_eV']:g}",
                f"{r['delta_p_net']:.6e}",
                f"{r['delta_p_per_atom']:.6e}",
                f"{r['interaction_time_fs']:.6f}",
                f"{r['e_loss_nuclear_eV']:.6f}",
                f"{r['e_loss_electronic_eV']:.6f}",
                r["coherent_flag"],
            ]
        )
    return buf.getvalue()
