"""Image reduction chain: corrections, centring, azimuthal traces, indexing."""

from .center import CenterFit, RingParam, fit_center, levenberg_marquardt, symmetric_centroid
from .corrections import RESCALE_TARGET, average_series, dark_correct, rescale, undistort
from .indexing import (
    AssignedPeak,
    DiffractionLine,
    InsufficientPeaks,
    PeakAssignment,
    assign_rings,
    diffraction_lines,
)
from .profile import RingProfileFit, fit_ring_profile, refine_assignment
from .radial import RadialTrace, azimuthal_average, detect_peaks, find_ring_peaks, local_noise

__all__ = [
    "AssignedPeak",
    "CenterFit",
    "DiffractionLine",
    "InsufficientPeaks",
    "PeakAssignment",
    "RESCALE_TARGET",
    "RadialTrace",
    "RingProfileFit",
    "RingParam",
    "assign_rings",
    "average_series",
    "azimuthal_average",
    "dark_correct",
    "detect_peaks",
    "diffraction_lines",
    "find_ring_peaks",
    "fit_ring_profile",
    "fit_center",
    "levenberg_marquardt",
    "refine_assignment",
    "local_noise",
    "rescale",
    "symmetric_centroid",
    "undistort",
]
