"""Azimuthal reduction of ring images and peak finding on the radial trace."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter, uniform_filter1d
from scipy.signal import find_peaks

from ..image import DetectorImage

DEFAULT_BIN_WIDTH = 0.1e-3  # rad


@dataclass
class RadialTrace:
    angle_mrad: np.ndarray
    momentum: np.ndarray  # units of |G1|; nan when k or |G1| unknown
    intensity: np.ndarray
    n_pixels: np.ndarray

    def __len__(self):
        return self.angle_mrad.size

    def valid(self) -> "RadialTrace":
        keep = self.n_pixels > 0
        return RadialTrace(
            self.angle_mrad[keep], self.momentum[keep], self.intensity[keep], self.n_pixels[keep]
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["angle_mrad", "momentum_G1", "intensity", "n_pixels"])
        for a, q, i, n in zip(self.angle_mrad, self.momentum, self.intensity, self.n_pixels):
            w.writerow([f"{a:.6f}", f"{q:.6f}", f"{i:.6f}", int(n)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RadialTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        col = lambda k, t=float: np.array([t(r[k]) for r in rows])
        return cls(col("angle_mrad"), col("momentum_G1"), col("intensity"), col("n_pixels", int))


def azimuthal_average(
    img: DetectorImage,
    center,
    mask=None,
    bin_width: float = DEFAULT_BIN_WIDTH,
    detector_distance: float = 0.727,
    k: float | None = None,
    g1: float | None = None,
    max_angle: float | None = None,
) -> RadialTrace:
    """Mean intensity in bins of scattering angle around ``center`` (px).

    Pixel radius is converted to angle with ``atan(r / D)``; momentum in
    units of |G1| uses the small-angle ``theta k / |G1|``. Masked pixels are
    excluded; bins with no pixels are kept with ``n_pixels = 0``.
    """
    cx, cy = center
    h, w = img.shape
    if not (0 <= cx < w and 0 <= cy < h):
        raise ValueError(f"centre {center} lies outside the image")
    mask = img.mask if mask is None else np.asarray(mask, dtype=bool)
    rows, cols = np.indices(img.shape)
    r = np.hypot(cols - cx, rows - cy) * img.pixel_pitch
    theta = np.arctan(r / detector_distance)
    ok = ~mask
    if max_angle is not None:
        ok &= theta < max_angle
    t = theta[ok]
    idx = (t / bin_width).astype(np.int64)
    nbins = int(idx.max()) + 1 if idx.size else 0
    sums = np.bincount(idx, weights=img.data[ok], minlength=nbins)
    counts = np.bincount(idx, minlength=nbins)
    mean = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    ang = (np.arange(nbins) + 0.5) * bin_width
    if k is not None and g1 is not None:
        mom = ang * k / g1
    else:
        mom = np.full(nbins, np.nan)
    return RadialTrace(ang * 1e3, mom, mean, counts)


@dataclass
class PeakReport:
    angle_mrad: np.ndarray
    prominence: np.ndarray
    noise: np.ndarray  # local noise sigma at each peak


def local_noise(y: np.ndarray, smooth_window: int = 3, median_window: int = 41) -> np.ndarray:
    """Robust local sigma of the bin-to-bin scatter.

    The high-pass residual ``y - moving_average(y)`` is dominated by noise
    for smooth ring profiles; a sliding median of its absolute value (MAD
    scaled to sigma) gives the local background scatter.
    """
    w = max(int(smooth_window), 3)
    hp = y - uniform_filter1d(y, w, mode="nearest")
    # moving-average residual of white noise has sigma * sqrt(1 - 1/w)
    # reflect, not "nearest": edge padding would repeat one sample across half the window
    mad = median_filter(np.abs(hp), size=median_window, mode="reflect")
    return 1.4826 * mad / np.sqrt(1.0 - 1.0 / w)


def find_ring_peaks(
    trace: RadialTrace,
    min_prominence: float = 3.0,
    smooth_window: int = 3,
    median_window: int = 41,
    noise=None,
    min_angle_mrad: float = 0.0,
) -> PeakReport:
    tr = trace.valid()
    if len(tr) < 3:
        return PeakReport(np.array([]), np.array([]), np.array([]))
    x = tr.angle_mrad
    y = tr.intensity
    ys = uniform_filter1d(y, max(int(smooth_window), 1), mode="nearest")
    if noise is None:
        sigma = local_noise(y, smooth_window, median_window)
    elif np.isscalar(noise):
        sigma = np.full(y.shape, float(noise))
    else:
        sigma = np.interp(x, np.asarray(noise[0]), np.asarray(noise[1]))
    floor = 1e-9 * max(float(np.max(np.abs(ys))), 1e-300)
    sigma = np.maximum(sigma, floor)
    idx, props = find_peaks(ys, prominence=min_prominence * sigma)
    keep = x[idx] > min_angle_mrad
    idx = idx[keep]
    prom = props["prominences"][keep]
    # three-point parabola through the smoothed maximum
    pos = []
    for i in idx:
        if 0 < i < len(ys) - 1:
            a, b, c = ys[i - 1], ys[i], ys[i + 1]
            den = a - 2 * b + c
            off = 0.5 * (a - c) / den if den != 0 else 0.0
            off = float(np.clip(off, -0.5, 0.5))
            pos.append(x[i] + off * (x[i + 1] - x[i - 1]) / 2.0)
        else:
            pos.append(x[i])
    return PeakReport(np.array(pos), prom, sigma[idx])


def detect_peaks(trace: RadialTrace, min_prominence: float = 3.0, smooth_window: int = 3, **kw) -> list[float]:
    """Peak angles (mrad) of the smoothed trace.

    A local maximum counts when its prominence is at least
    ``min_prominence`` times the local noise sigma.
    """
    return [float(a) for a in find_ring_peaks(trace, min_prominence, smooth_window, **kw).angle_mrad]
