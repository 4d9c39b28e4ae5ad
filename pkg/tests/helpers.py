import numpy as np


def radial_peak_px(img, center_px, r_guess, half=6.0, bin_px=0.25):
    """Ring radius in pixels: centroid of the background-subtracted radial profile."""
    rows, cols = np.indices(img.shape)
    rho = np.hypot(cols - center_px[0], rows - center_px[1])
    ok = ~img.mask & (np.abs(rho - r_guess) < half + 2)
    b = np.floor(rho[ok] / bin_px).astype(int)
    s = np.bincount(b, img.data[ok])
    n = np.bincount(b)
    keep = n > 0
    r = (np.arange(len(s)) + 0.5)[keep] * bin_px
    y = s[keep] / n[keep]
    win = np.abs(r - r_guess) < half
    base = np.min(y[win])
    w = np.clip(y[win] - base, 0, None)
    return float(np.sum(r[win] * w) / np.sum(w))
