"""Pixel-level corrections applied before any geometry is extracted."""

from __future__ import annotations

import numpy as np

from ..image import DetectorImage, _max_radius, check_monotone, radial_map, resample_radial

RESCALE_TARGET = 1000.0


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, DetectorImage) else np.asarray(x, dtype=float)


def dark_correct(img: DetectorImage, dark) -> DetectorImage:
    """Subtract a dark frame, clipping at zero."""
    d = _array(dark)
    if np.ndim(d) and d.shape != img.shape:
        raise ValueError(f"dark frame shape {d.shape} differs from image shape {img.shape}")
    return img.copy(data=np.maximum(img.data - d, 0.0))


def _region(img: DetectorImage, region) -> np.ndarray:
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return img.data[region]
    x0, y0, x1, y1 = region
    return img.data[y0:y1, x0:x1]


def rescale(img: DetectorImage, reference_region, target: float = RESCALE_TARGET) -> DetectorImage:
    """Scale the image so the reference region averages ``target`` counts.

    ``reference_region`` is ``(x0, y0, x1, y1)`` in pixels or a boolean
    array selecting the pixels of known brightness.
    """
    vals = _region(img, reference_region)
    if vals.size == 0:
        raise ValueError("reference region is empty")
    mean = float(vals.mean())
    if not mean > 0:
        raise ValueError("reference region has zero mean brightness")
    out = img.copy(data=img.data * (target / mean))
    out.meta["rescale_target"] = target
    return out


def average_series(imgs) -> DetectorImage:
    """Pixel mean of a series; the mask is the union of all masks."""
    imgs = list(imgs)
    if not imgs:
        raise ValueError("need at least one image")
    first = imgs[0]
    for im in imgs[1:]:
        if im.shape != first.shape:
            raise ValueError("all images in a series must share a shape")
    data = np.mean([im.data for im in imgs], axis=0)
    mask = np.logical_or.reduce([im.mask for im in imgs])
    return first.copy(data=data, mask=mask)


def undistort(img: DetectorImage, c1: float, c2: float, r_norm: float = 1.0) -> DetectorImage:
    """Undo radial objective distortion r -> r (1 + c1 u + c2 u^2), u = r / r_norm."""
    if c1 == 0 and c2 == 0:
        return img.copy()
    check_monotone(c1, c2, _max_radius(img), r_norm)
    return resample_radial(img, lambda r: radial_map(r, c1, c2, r_norm))
