"""Pattern-centre determination by a 2D fit of the inner rings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from ..image import DetectorImage
from .indexing import InsufficientPeaks


@dataclass
class RingParam:
    radius: float  # px
    width: float  # px
    amplitude: float  # counts


@dataclass
class CenterFit:
    cx: float
    cy: float
    ring_params: list
    background: float
    residual_rms: float
    converged: bool
    iterations: int

    @property
    def center(self) -> tuple:
        return (self.cx, self.cy)


def symmetric_centroid(img: DetectorImage, mask=None, iterations: int = 50, tol: float = 1e-3):
    """Centroid over pixels whose point reflection is also valid.

    Masked areas (beam block, detector edge) break the symmetry of a plain
    centroid; restricting to pixels whose mirror through the current
    estimate is also unmasked removes that bias as the estimate converges.
    """
    mask = img.mask if mask is None else mask
    valid = ~mask
    data = img.data
    floor = np.median(data[valid]) if valid.any() else 0.0
    weight = np.where(valid, np.clip(data - floor, 0, None), 0.0)
    h, w = data.shape
    rows, cols = np.indices(data.shape)
    tot = weight.sum()
    if tot <= 0:
        return (w - 1) / 2.0, (h - 1) / 2.0
    cx = float((weight * cols).sum() / tot)
    cy = float((weight * rows).sum() / tot)
    for _ in range(iterations):
        mc = np.rint(2 * cx - cols).astype(int)
        mr = np.rint(2 * cy - rows).astype(int)
        inside = (mc >= 0) & (mc < w) & (mr >= 0) & (mr < h)
        ok = inside.copy()
        ok[inside] &= valid[mr[inside], mc[inside]]
        ok &= valid
        wt = np.where(ok, weight, 0.0)
        tot = wt.sum()
        if tot <= 0:
            break
        nx = float((wt * cols).sum() / tot)
        ny = float((wt * rows).sum() / tot)
        shift = np.hypot(nx - cx, ny - cy)
        cx, cy = nx, ny
        if shift < tol:
            break
    return cx, cy


def _radial_peaks_px(img, cx, cy, n, r_min=12.0):
    """First ``n`` peak radii (px) of a 0.5 px radial profile about (cx, cy)."""
    rows, cols = np.indices(img.shape)
    r = np.hypot(cols - cx, rows - cy)
    ok = ~img.mask
    idx = (r[ok] / 0.5).astype(int)
    s = np.bincount(idx, img.data[ok])
    c = np.bincount(idx)
    prof = np.divide(s, c, out=np.zeros_like(s), where=c > 0)
    prof = uniform_filter1d(prof, 5)
    radii = np.arange(prof.size) * 0.5 + 0.25
    base = uniform_filter1d(prof, 61)
    cand = [
        i for i in range(1, prof.size - 1)
        if prof[i] >= prof[i - 1] and prof[i] > prof[i + 1] and radii[i] > r_min and prof[i] > base[i]
    ]
    cand.sort(key=lambda i: radii[i])
    peaks = [(radii[i], prof[i] - base[i]) for i in cand]
    # drop shallow wiggles relative to the strongest ring
    if peaks:
        top = max(p[1] for p in peaks)
        peaks = [p for p in peaks if p[1] > 0.05 * top]
    return [p[0] for p in peaks[:n]], float(np.median(prof[prof > 0])) if (prof > 0).any() else 0.0


def _ring_basis(q, x, y, n):
    """Columns: one unit-height Gaussian annulus per ring, then a constant."""
    rho = np.hypot(x - q[0], y - q[1])
    cols = [np.exp(-0.5 * ((rho - q[2 + i]) / q[2 + n + i]) ** 2) for i in range(n)]
    cols.append(np.ones_like(rho))
    return np.column_stack(cols)


def _linear_solve(q, x, y, z, n):
    B = _ring_basis(q, x, y, n)
    coef, *_ = np.linalg.lstsq(B, z, rcond=None)
    return coef, B @ coef - z


def levenberg_marquardt(fun, p0, max_iter: int = 200, xtol: float = 1e-6, lam0: float = 1e-3):
    """Damped Gauss-Newton with a forward-difference Jacobian.

    Damping follows the gain-ratio rule (shrink when the quadratic model
    predicts the actual decrease well, grow geometrically on rejected
    steps) with Marquardt scaling by the running maximum of diag(J^T J).
    Stops when the relative step falls below ``xtol``; returns
    ``(p, residuals, converged, iterations)``.
    """
    p = np.asarray(p0, dtype=float).copy()
    res = fun(p)
    cost = res @ res
    lam, nu = lam0, 2.0
    scale = None
    for it in range(1, max_iter + 1):
        J = np.empty((res.size, p.size))
        for j in range(p.size):
            hj = 1e-6 * max(abs(p[j]), 1.0)
            q = p.copy()
            q[j] += hj
            J[:, j] = (fun(q) - res) / hj
        A = J.T @ J
        g = J.T @ res
        d = np.diag(A).copy()
        scale = d if scale is None else np.maximum(scale, d)
        D = np.where(scale > 0, scale, 1.0)
        while True:
            try:
                step = -np.linalg.solve(A + lam * np.diag(D), g)
            except np.linalg.LinAlgError:
                lam *= nu
                nu *= 2.0
                continue
            trial = p + step
            tres = fun(trial)
            tcost = tres @ tres
            predicted = -(2.0 * g @ step + step @ A @ step)
            rho = (cost - tcost) / predicted if predicted > 0 else -1.0
            if np.isfinite(tcost) and rho > 0:
                p, res, cost = trial, tres, tcost
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                break
            lam *= nu
            nu *= 2.0
            if lam > 1e16:
                return p, res, False, it
        if np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol):
            return p, res, True, it
    return p, res, False, max_iter


def fit_center(img: DetectorImage, n_inner_rings: int = 3, guess=None, max_iter: int = 200) -> CenterFit:
    """Fit the innermost rings with Gaussian annuli sharing one centre.

    The model is ``sum_n A_n exp(-(rho - r_n)^2 / (2 w_n^2)) + B`` with
    ``rho`` the distance from (cx, cy). Masked pixels are ignored. If the
    fit does not converge the best parameters found are returned with
    ``converged=False``.
    """
    cx0, cy0 = guess if guess is not None else symmetric_centroid(img)
    radii, _ = _radial_peaks_px(img, cx0, cy0, n_inner_rings)
    if not radii:
        raise InsufficientPeaks("no rings visible for the centre fit")
    n = len(radii)
    w0 = 3.0
    rows, cols = np.indices(img.shape)
    rho = np.hypot(cols - cx0, rows - cy0)
    lo = max(radii[0] - 5 * w0 - 5, 1.0)
    hi = radii[-1] + 5 * w0 + 5
    sel = (~img.mask) & (rho > lo) & (rho < hi)
    x = cols[sel].astype(float)
    y = rows[sel].astype(float)
    z = img.data[sel]
    # amplitudes and background enter linearly and are solved exactly at
    # every step; the damped Gauss-Newton only sees centre, radii and widths
    q0 = np.array([cx0, cy0, *radii, *([w0] * n)])
    q, _, ok, it = levenberg_marquardt(lambda q: _linear_solve(q, x, y, z, n)[1], q0, max_iter)
    coef, res = _linear_solve(q, x, y, z, n)
    rings = [RingParam(float(q[2 + i]), float(abs(q[2 + n + i])), float(coef[i])) for i in range(n)]
    return CenterFit(
        cx=float(q[0]),
        cy=float(q[1]),
        ring_params=rings,
        background=float(coef[n]),
        residual_rms=float(np.sqrt(np.mean(res**2))),
        converged=ok,
        iterations=it,
    )
