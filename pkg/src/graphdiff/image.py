"""Detector image container and radial resampling shared by synth and imgproc."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import map_coordinates

MAX_COUNTS = 65535


class DomainError(ValueError):
    """Parameters outside the region where a mapping is defined."""


@dataclass
class DetectorImage:
    """2D intensity grid on the detector.

    ``origin`` is the physical (x, y) position in metres of pixel (0, 0)
    relative to the camera's optical axis; columns run along x and rows
    along y. With the default origin the axis falls on pixel (W/2, H/2).
    ``mask`` is True where pixels are excluded.
    """

    data: np.ndarray
    pixel_pitch: float = 40e-6
    origin: tuple | None = None
    mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("detector image must be 2D")
        if self.origin is None:
            h, w = self.data.shape
            self.origin = (-(w // 2) * self.pixel_pitch, -(h // 2) * self.pixel_pitch)
        if self.mask is None:
            self.mask = np.zeros(self.data.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.data.shape:
                raise ValueError("mask shape differs from data shape")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def copy(self, **changes) -> "DetectorImage":
        kw = dict(data=self.data.copy(), mask=self.mask.copy(), meta=dict(self.meta))
        kw.update(changes)
        return replace(self, **kw)

    def to_pixel(self, x, y):
        """Physical (m) to fractional pixel coordinates (col, row)."""
        return (
            (np.asarray(x) - self.origin[0]) / self.pixel_pitch,
            (np.asarray(y) - self.origin[1]) / self.pixel_pitch,
        )

    def to_physical(self, col, row):
        return (
            self.origin[0] + np.asarray(col) * self.pixel_pitch,
            self.origin[1] + np.asarray(row) * self.pixel_pitch,
        )

    def physical_grid(self):
        rows, cols = np.indices(self.shape, dtype=float)
        return self.to_physical(cols, rows)

    def clamped(self) -> "DetectorImage":
        return self.copy(data=np.clip(self.data, 0, MAX_COUNTS))


def radial_map(r, c1: float, c2: float, r_norm: float = 1.0):
    """Distorted radius ``r (1 + c1 u + c2 u^2)`` with ``u = r / r_norm``."""
    u = np.asarray(r) / r_norm
    return np.asarray(r) * (1.0 + c1 * u + c2 * u * u)


def check_monotone(c1: float, c2: float, r_max: float, r_norm: float = 1.0):
    u = np.linspace(0.0, r_max / r_norm, 10001)
    slope = 1.0 + 2.0 * c1 * u + 3.0 * c2 * u * u
    if np.any(slope <= 0):
        raise DomainError(
            f"radial distortion c1={c1:g}, c2={c2:g} is not monotone out to r={r_max:g} m"
        )


def invert_radial_map(rho, c1: float, c2: float, r_norm: float = 1.0, tol: float = 1e-9):
    """Solve ``radial_map(r) = rho`` for r with Newton's method.

    ``tol`` is absolute, in the units of ``rho``. The map is assumed monotone
    (see :func:`check_monotone`).
    """
    rho = np.asarray(rho, dtype=float)
    r = rho.copy()
    for _ in range(100):
        u = r / r_norm
        f = r * (1.0 + c1 * u + c2 * u * u) - rho
        df = 1.0 + 2.0 * c1 * u + 3.0 * c2 * u * u
        step = f / df
        r = r - step
        if np.max(np.abs(step), initial=0.0) < tol:
            break
    return r


def _max_radius(img: DetectorImage) -> float:
    xs = np.array([img.origin[0], img.origin[0] + (img.width - 1) * img.pixel_pitch])
    ys = np.array([img.origin[1], img.origin[1] + (img.height - 1) * img.pixel_pitch])
    return float(np.max(np.hypot(xs[:, None], ys[None, :])))


def resample_radial(img: DetectorImage, source_radius) -> DetectorImage:
    """Resample so that output radius rho shows input radius ``source_radius(rho)``.

    Radii are physical, measured from the optical axis. Bilinear
    interpolation; samples falling off the image read as 0 and masked.
    """
    x, y = img.physical_grid()
    rho = np.hypot(x, y)
    src = source_radius(rho)
    scale = np.divide(src, rho, out=np.ones_like(rho), where=rho > 0)
    col, row = img.to_pixel(x * scale, y * scale)
    coords = np.array([row, col])
    data = map_coordinates(img.data, coords, order=1, mode="constant", cval=0.0)
    m = map_coordinates(img.mask.astype(float), coords, order=1, mode="constant", cval=1.0)
    return img.copy(data=data, mask=m > 1e-6)
