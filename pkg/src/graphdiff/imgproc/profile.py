"""Whole-trace ring fit: deblends overlapping rings before indexing.

Peak maxima of rings closer than a few widths are pulled toward their
neighbours. Fitting the full radial trace with one Gaussian per ring
(common width, amplitudes solved linearly, smooth background) recovers
per-ring angles that a plain maximum search cannot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev

from .. import constants as C
from ..beamline import Beam
from ..lattice import ReciprocalLattice, enumerate_rings
from .center import levenberg_marquardt
from .indexing import AssignedPeak, PeakAssignment, _fit_lambda
from .radial import RadialTrace, local_noise


@dataclass
class RingProfileFit:
    wavelength: float  # m, from the tied (single-wavelength) fit
    width_mrad: float
    loeschian: np.ndarray
    ratio: np.ndarray
    angle_mrad: np.ndarray  # per ring; free rings carry their own fitted angle
    free: np.ndarray  # bool, ring angle was fitted independently
    amplitude: np.ndarray
    amplitude_snr: np.ndarray
    residual_rms: float
    converged: bool


def _design(theta, centers, sigma, t0, t1, degree):
    u = 2.0 * (theta - t0) / (t1 - t0) - 1.0
    cols = [np.exp(-0.5 * (theta / sigma) ** 2)]  # undiffracted residue
    cols += [np.exp(-0.5 * ((theta - c) / sigma) ** 2) for c in centers]
    cols += [chebyshev.chebval(u, np.eye(degree + 1)[d]) for d in range(degree + 1)]
    return np.column_stack(cols)


def _solve(theta, y, centers, sigma, t0, t1, degree):
    A = _design(theta, centers, sigma, t0, t1, degree)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef, A @ coef - y


def fit_ring_profile(
    trace: RadialTrace,
    wavelength: float,
    rl: ReciprocalLattice,
    max_ratio: float = 8.0,
    width_mrad: float = 0.4,
    background_degree: int = 6,
    free_snr: float = 10.0,
    min_separation: float = 1.0,
) -> RingProfileFit:
    """Fit the trace with Gaussian rings at ``arcsin(sqrt(L) |G1| lambda / 2 pi)``.

    First the wavelength and common width are fitted with all ring angles
    tied to them. Then every ring with amplitude above ``free_snr`` times
    the trace noise, and no neighbour closer than ``min_separation`` widths,
    gets its own angle.
    """
    tr = trace.valid()
    g1 = rl.magnitude
    # enumerate past max_ratio: rings just beyond the last one still
    # overlap the fit window and must be part of the model
    rings = enumerate_rings(rl, max_ratio + 1.0).rings
    ratio = np.array([r.ratio for r in rings])
    L = np.array([r.loeschian for r in rings])
    theta_all = tr.angle_mrad * 1e-3

    def centers(lam):
        s = ratio * g1 * lam / (2 * math.pi)
        return np.where(s < 1, np.arcsin(np.clip(s, 0, 1)), np.inf)

    c0 = centers(wavelength)
    sig0 = width_mrad * 1e-3
    core = (ratio <= max_ratio + 1e-9) & (c0 < theta_all[-1])
    if not core.any():
        raise ValueError("no ring of the requested set falls inside the trace")
    t0 = max(c0[0] - 4 * sig0, 0.4 * c0[0])
    t1 = min(c0[core][-1] + 5 * sig0, theta_all[-1])
    inside = c0 < t1 + 4 * sig0
    ratio, L, c0 = ratio[inside], L[inside], c0[inside]
    sel = (theta_all >= t0) & (theta_all <= t1)
    theta = theta_all[sel]
    y = tr.intensity[sel]
    scale = float(np.max(np.abs(y))) or 1.0
    y = y / scale

    # stage 1: wavelength and width, all rings tied
    def res1(p):
        lam, sig = p[0] * wavelength, abs(p[1]) * sig0
        return _solve(theta, y, centers(lam)[: ratio.size], sig, t0, t1, background_degree)[1]

    p1, _, ok1, _ = levenberg_marquardt(res1, np.array([1.0, 1.0]), max_iter=100, xtol=1e-10)
    lam1, sig1 = p1[0] * wavelength, abs(p1[1]) * sig0
    cen1 = centers(lam1)[: ratio.size]
    coef1, r1 = _solve(theta, y, cen1, sig1, t0, t1, background_degree)
    amp1 = coef1[1 : 1 + ratio.size]

    noise = float(np.median(local_noise(tr.intensity))) / scale
    noise = max(noise, 1e-12)
    snr = amp1 / noise
    gaps = np.diff(cen1)
    sep = np.minimum(np.r_[np.inf, gaps], np.r_[gaps, np.inf]) / sig1
    # only rings of the requested set, with data on both flanks, get their own angle
    well_inside = (ratio <= max_ratio + 1e-9) & (cen1 > t0 + 3 * sig1) & (cen1 < t1 - 3 * sig1)
    free = (snr > free_snr) & (sep >= min_separation) & well_inside

    # stage 2: free angles for well-measured rings
    idx = np.flatnonzero(free)
    converged = ok1
    cen2 = cen1.copy()
    if idx.size:
        def res2(p):
            c = cen1.copy()
            c[idx] = cen1[idx] + p[1:] * sig1
            return _solve(theta, y, c, abs(p[0]) * sig1, t0, t1, background_degree)[1]

        p2, _, ok2, _ = levenberg_marquardt(res2, np.r_[1.0, np.zeros(idx.size)], max_iter=200, xtol=1e-10)
        cen2[idx] = cen1[idx] + p2[1:] * sig1
        converged = converged and ok2
        r2 = _solve(theta, y, cen2, abs(p2[0]) * sig1, t0, t1, background_degree)[1]
    else:
        r2 = r1

    return RingProfileFit(
        wavelength=lam1,
        width_mrad=sig1 * 1e3,
        loeschian=L,
        ratio=ratio,
        angle_mrad=cen2 * 1e3,
        free=free,
        amplitude=amp1 * scale,
        amplitude_snr=snr,
        residual_rms=float(np.sqrt(np.mean(r2**2))) * scale,
        converged=bool(converged),
    )


def refine_assignment(
    trace: RadialTrace, initial: PeakAssignment, beam: Beam, rl: ReciprocalLattice, **kw
) -> tuple[PeakAssignment, RingProfileFit]:
    """Replace peak maxima by deblended ring angles and refit the wavelength."""
    fit = fit_ring_profile(trace, initial.wavelength_fm * 1e-15, rl, **kw)
    free = fit.free
    if free.sum() < 2:
        return initial, fit
    theta = fit.angle_mrad[free] * 1e-3
    ratios = fit.ratio[free]
    lam, stderr = _fit_lambda(theta, ratios, rl.magnitude)
    peaks = []
    for t, r, L in zip(theta, ratios, fit.loeschian[free]):
        pred = math.asin(r * rl.magnitude * lam / (2 * math.pi))
        peaks.append(AssignedPeak(t * 1e3, float(r), int(L), (t - pred) * 1e3))
    energy = (C.PLANCK_H / lam) ** 2 / (2 * beam.species.mass) / C.EV
    return (
        PeakAssignment(
            peaks=peaks,
            wavelength_fm=lam * 1e15,
            energy_eV=energy,
            species=beam.species.value,
            nominal_energy_eV=beam.energy,
            wavelength_stderr_fm=stderr * 1e15,
            unmatched_mrad=[],
        ),
        fit,
    )
