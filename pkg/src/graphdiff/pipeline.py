"""The full reduction chain from raw frames to an indexed ring assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beamline import Beam, BeamlineGeometry, wavevector
from .image import DetectorImage
from .imgproc import (
    CenterFit,
    PeakAssignment,
    RadialTrace,
    RingProfileFit,
    assign_rings,
    average_series,
    azimuthal_average,
    dark_correct,
    find_ring_peaks,
    fit_center,
    local_noise,
    refine_assignment,
    rescale,
    undistort,
)
from .imgproc.corrections import RESCALE_TARGET
from .lattice import ReciprocalLattice, RingSystem
from .synth import PatternParams, radial_profile_model


@dataclass
class AnalyzeParams:
    dark_level: float = 0.0  # counts, used when no dark frame is given
    reference_region: tuple | None = (16, 16, 80, 80)
    rescale_target: float = RESCALE_TARGET
    distortion: tuple = (0.0, 0.0)
    distortion_norm: float = 1.0  # m
    n_inner_rings: int = 3
    bin_width: float = 0.1e-3  # rad
    min_prominence: float = 3.0
    smooth_window: int = 3
    tolerance_mrad: float = 0.2
    max_ratio: float = 12.0
    refine: bool = True
    refine_max_ratio: float = 8.0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.n_inner_rings < 1:
            raise ValueError("n_inner_rings must be >= 1")


@dataclass
class AnalysisResult:
    image: DetectorImage  # corrected, averaged, undistorted
    center: CenterFit
    trace: RadialTrace
    peaks_mrad: list
    assignment: PeakAssignment  # from the peak maxima
    refined: PeakAssignment  # after profile deblending (same as assignment when off)
    profile: RingProfileFit | None = None
    notes: dict = field(default_factory=dict)

    def report(self) -> dict:
        c = self.center
        out = {
            "center_px": [c.cx, c.cy],
            "center_converged": c.converged,
            "center_iterations": c.iterations,
            "center_residual_rms": c.residual_rms,
            "inner_rings_px": [[r.radius, r.width, r.amplitude] for r in c.ring_params],
            "n_peaks": len(self.peaks_mrad),
            "peaks_mrad": list(self.peaks_mrad),
            "peak_assignment": self.assignment.to_dict(),
            "assignment": self.refined.to_dict(),
        }
        if self.profile is not None:
            p = self.profile
            out["profile_fit"] = {
                "wavelength_fm": p.wavelength * 1e15,
                "width_mrad": p.width_mrad,
                "loeschian": [int(v) for v in p.loeschian],
                "angle_mrad": [float(v) for v in p.angle_mrad],
                "free": [bool(v) for v in p.free],
                "amplitude": [float(v) for v in p.amplitude],
                "converged": p.converged,
            }
        out.update(self.notes)
        return out


def prepare(frames, params: AnalyzeParams, dark=None) -> DetectorImage:
    """Dark subtraction and rescaling per frame, then averaging and undistortion."""
    frames = list(frames)
    if not frames:
        raise ValueError("no input frames")
    out = []
    for im in frames:
        im = dark_correct(im, dark if dark is not None else params.dark_level)
        if params.reference_region is not None:
            im = rescale(im, params.reference_region, params.rescale_target)
        out.append(im)
    img = average_series(out)
    c1, c2 = params.distortion
    return undistort(img, c1, c2, params.distortion_norm)


def analyze(
    frames,
    beam: Beam,
    rl: ReciprocalLattice,
    geom: BeamlineGeometry | None = None,
    params: AnalyzeParams | None = None,
    dark=None,
) -> AnalysisResult:
    """dark -> rescale -> average -> undistort -> centre -> trace -> peaks -> rings.

    ``beam`` carries the nominal species and energy used to seed the
    indexing. Raises ``InsufficientPeaks`` when fewer than two peaks index.
    """
    geom = geom or BeamlineGeometry()
    params = params or AnalyzeParams()
    if isinstance(frames, DetectorImage):
        frames = [frames]
    img = prepare(frames, params, dark)

    cf = fit_center(img, params.n_inner_rings)
    max_angle = math.atan(geom.detector_diameter / 2.0 / geom.detector_distance)
    trace = azimuthal_average(
        img,
        cf.center,
        bin_width=params.bin_width,
        detector_distance=geom.detector_distance,
        k=wavevector(beam),
        g1=rl.magnitude,
        max_angle=max_angle,
    )
    peaks = find_ring_peaks(trace, params.min_prominence, params.smooth_window).angle_mrad
    peaks = [float(p) for p in peaks]
    first = assign_rings(peaks, beam, rl, params.tolerance_mrad, params.max_ratio)
    refined, prof = first, None
    if params.refine:
        refined, prof = refine_assignment(trace, first, beam, rl, max_ratio=params.refine_max_ratio)
    return AnalysisResult(img, cf, trace, peaks, first, refined, prof)


def expected_peak_count(
    trace: RadialTrace,
    beam: Beam,
    rings: RingSystem,
    rl: ReciprocalLattice,
    geom: BeamlineGeometry,
    pattern: PatternParams,
    min_prominence: float = 3.0,
    smooth_window: int = 3,
    scale: float = 1.0,
    noise=None,
) -> int:
    """Peaks the noise-free generating profile shows above the trace's noise.

    The ideal profile is sampled at the trace's bin angles and searched with
    the same detector, using the local noise measured on ``trace`` (or the
    supplied ``noise``) as the prominence reference. This is the ring count
    the analysis can be expected to find.
    """
    tr = trace.valid()
    rho = geom.detector_distance * np.tan(tr.angle_mrad * 1e-3)
    ideal = scale * pattern.gain * radial_profile_model(rho, beam, rings, rl, geom, pattern)
    if noise is None:
        noise = (tr.angle_mrad, local_noise(tr.intensity, smooth_window))
    model = RadialTrace(tr.angle_mrad, tr.momentum, ideal, tr.n_pixels)
    return len(find_ring_peaks(model, min_prominence, smooth_window, noise=noise).angle_mrad)
