"""Synthetic Debye-Scherrer detector images."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import constants as C
from .beamline import Beam, BeamlineGeometry, NonDiffractingOrder, diffraction_angle
from .image import (
    MAX_COUNTS,
    DetectorImage,
    _max_radius,
    check_monotone,
    invert_radial_map,
    resample_radial,
)
from .lattice import ReciprocalLattice, RingSystem

# Thorn-shaped shadow: tip just past the beam centre, base beyond the detector edge.
DEFAULT_BEAM_BLOCK = ((-1.0e-3, 0.0), (45e-3, -5e-3), (45e-3, 5e-3))


@dataclass
class PatternParams:
    ring_width_sigma: float | None = None  # rad; None -> collimation FWHM / 2.3548
    damping_alpha: float = 0.0  # m^2
    amplitude_scale: float = 400.0  # counts per unit multiplicity
    background_level: float = 150.0  # counts, halo peak
    background_spread: float = 10e-3  # rad, halo sigma
    background_floor: float = 20.0  # counts
    central_level: float = 5000.0  # counts, undiffracted residue
    beam_block: tuple | None = DEFAULT_BEAM_BLOCK  # metres, relative to the beam centre
    noise_seed: int | None = None
    center: tuple = (0.0, 0.0)  # beam centre, metres from the optical axis
    image_size: tuple = (2048, 2048)  # (width, height)
    pixel_pitch: float = 40e-6
    gain: float = 1.0
    reference_level: float = 1000.0
    reference_region: tuple = (16, 16, 80, 80)  # x0, y0, x1, y1 in pixels
    distortion: tuple = (0.0, 0.0)  # c1, c2
    distortion_norm: float = 1.0  # m; radius unit the coefficients act on

    def __post_init__(self):
        if self.ring_width_sigma is not None and not self.ring_width_sigma > 0:
            raise ValueError("ring_width_sigma must be positive")
        if self.damping_alpha < 0:
            raise ValueError("damping_alpha must be >= 0")

    def width_sigma(self, geom: BeamlineGeometry) -> float:
        if self.ring_width_sigma is not None:
            return self.ring_width_sigma
        return (geom.s1 + geom.s2) / geom.L * C.FWHM_TO_SIGMA

    def as_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
        return d


def ring_radii(beam: Beam, rings: RingSystem, rl: ReciprocalLattice, D: float) -> list[float]:
    """Ring radii ``D tan(theta)`` on a flat detector at distance D."""
    out = []
    for ring in rings:
        try:
            theta = diffraction_angle(beam, ring, rl)
        except NonDiffractingOrder:
            warnings.warn(f"ring sqrt({ring.loeschian}) does not diffract; skipped")
            continue
        out.append(D * math.tan(theta))
    return out


def points_in_polygon(x, y, poly) -> np.ndarray:
    """Even-odd rule, vectorised over the points."""
    x = np.asarray(x)
    y = np.asarray(y)
    inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > y) != (y2 > y)
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def radial_profile_model(rho, beam, rings, rl, geom, params, radii=None):
    """Noise-free intensity as a function of radius from the beam centre.

    ``rho`` may be any shape; the same profile is used to paint images and
    as a ground-truth trace in tests.
    """
    rho = np.asarray(rho, dtype=float)
    D = geom.detector_distance
    sig_r = D * params.width_sigma(geom)
    out = np.full(rho.shape, params.background_floor, dtype=float)
    theta = rho / D
    out += params.background_level * np.exp(-0.5 * (theta / params.background_spread) ** 2)
    out += params.central_level * np.exp(-0.5 * (rho / sig_r) ** 2)
    if radii is None:
        radii = ring_radii(beam, rings, rl, D)
    g1 = rl.magnitude
    for ring, r_n in zip(rings, radii):
        amp = params.amplitude_scale * ring.multiplicity * math.exp(
            -params.damping_alpha * (ring.ratio * g1) ** 2
        )
        if amp == 0:
            continue
        out += amp * np.exp(-0.5 * ((rho - r_n) / sig_r) ** 2)
    return out


def _paint(rho, beam, rings, rl, geom, params):
    """Per-pixel profile evaluation, touching only pixels near each ring."""
    D = geom.detector_distance
    sig_r = D * params.width_sigma(geom)
    flat = rho.ravel()
    out = params.background_floor + params.background_level * np.exp(
        -0.5 * (flat / D / params.background_spread) ** 2
    )
    order = np.argsort(flat, kind="stable")
    srt = flat[order]

    def add_band(centre, amp):
        lo, hi = np.searchsorted(srt, [centre - 8 * sig_r, centre + 8 * sig_r])
        idx = order[lo:hi]
        out[idx] += amp * np.exp(-0.5 * ((flat[idx] - centre) / sig_r) ** 2)

    add_band(0.0, params.central_level)
    g1 = rl.magnitude
    for ring, r_n in zip(rings, ring_radii(beam, rings, rl, D)):
        amp = params.amplitude_scale * ring.multiplicity * math.exp(
            -params.damping_alpha * (ring.ratio * g1) ** 2
        )
        if amp > 0:
            add_band(r_n, amp)
    return out.reshape(rho.shape)


def apply_distortion(img: DetectorImage, c1: float, c2: float, r_norm: float = 1.0) -> DetectorImage:
    """Camera-objective radial distortion: radius r is imaged at r (1 + c1 u + c2 u^2).

    ``u = r / r_norm`` with radii measured from the optical axis. Bilinear
    resampling; the identity map returns an exact copy.
    """
    if c1 == 0 and c2 == 0:
        return img.copy()
    check_monotone(c1, c2, _max_radius(img), r_norm)
    tol = 1e-3 * img.pixel_pitch
    return resample_radial(img, lambda rho: invert_radial_map(rho, c1, c2, r_norm, tol))


def add_poisson_noise(img: DetectorImage, seed: int) -> DetectorImage:
    """Poisson counts per pixel; one RNG stream per row so results never depend on chunking."""
    lam = np.clip(img.data, 0, None)
    streams = np.random.SeedSequence(seed).spawn(img.height)
    out = np.empty_like(lam)
    for row, ss in enumerate(streams):
        out[row] = np.random.Generator(np.random.PCG64(ss)).poisson(lam[row])
    return img.copy(data=out)


def synthesize(
    beam: Beam,
    rings: RingSystem,
    rl: ReciprocalLattice,
    geom: BeamlineGeometry | None = None,
    params: PatternParams | None = None,
) -> DetectorImage:
    """Render a polycrystalline diffraction image.

    Order of operations: ring/halo/residue model, detector aperture and
    beam-block shadow (zeroed and masked), gain, radial distortion,
    reference patch, Poisson noise (if ``noise_seed`` is set), 16-bit clamp.
    """
    geom = geom or BeamlineGeometry()
    params = params or PatternParams()
    w, h = params.image_size
    img = DetectorImage(np.zeros((h, w)), pixel_pitch=params.pixel_pitch)
    x, y = img.physical_grid()
    cx, cy = params.center
    rho = np.hypot(x - cx, y - cy)
    data = _paint(rho, beam, rings, rl, geom, params)

    mask = np.hypot(x, y) > geom.detector_diameter / 2.0
    if params.beam_block is not None:
        mask |= points_in_polygon(x - cx, y - cy, params.beam_block)
    data[mask] = 0.0
    data *= params.gain
    img = img.copy(data=data, mask=mask)

    c1, c2 = params.distortion
    if c1 or c2:
        img = apply_distortion(img, c1, c2, params.distortion_norm)

    if params.reference_level > 0 and params.reference_region is not None:
        x0, y0, x1, y1 = params.reference_region
        img.data[y0:y1, x0:x1] = params.reference_level * params.gain

    if params.noise_seed is not None:
        img = add_poisson_noise(img, params.noise_seed)
    img.data = np.clip(img.data, 0, MAX_COUNTS)
    img.meta = {
        "species": beam.species.value,
        "energy_eV": beam.energy,
        "detector_distance_m": geom.detector_distance,
        "pixel_pitch_m": params.pixel_pitch,
        "beam_center_px": list(map(float, img.to_pixel(cx, cy))),
        "pattern": params.as_dict(),
    }
    return img
