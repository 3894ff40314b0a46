"""Pure numpy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``GNSSMAP_BACKEND=python`` is set.
"""

import numpy as np
from scipy.special import expit

PROB_CLAMP = 1e-12


def ray_entry_batch(ox, oy, dir_x, dir_y, ring):
    """Entry distance of many 2D rays into one polygon.

    Returns ``(dist, inside)``; ``dist`` is NaN where the ray crosses no edge.
    ``inside`` flags origins strictly inside or on the boundary.
    """
    ox = np.asarray(ox, dtype=float)[:, None]
    oy = np.asarray(oy, dtype=float)[:, None]
    dx = np.asarray(dir_x, dtype=float)[:, None]
    dy = np.asarray(dir_y, dtype=float)[:, None]
    ring = np.asarray(ring, dtype=float)
    x1, y1 = ring[:, 0][None, :], ring[:, 1][None, :]
    nxt = np.roll(ring, -1, axis=0)
    ex, ey = nxt[:, 0][None, :] - x1, nxt[:, 1][None, :] - y1

    # origin + t*dir == p1 + u*edge, solved by Cramer's rule
    den = dx * ey - dy * ex
    wx, wy = x1 - ox, y1 - oy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / den
        u = (wx * dy - wy * dx) / den
    hit = (den != 0.0) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(hit, t, np.inf)
    dist = t.min(axis=1)

    # crossing-number point in polygon
    yi, yj = ring[:, 1][None, :], nxt[:, 1][None, :]
    xi, xj = ring[:, 0][None, :], nxt[:, 0][None, :]
    straddle = (yi > oy) != (yj > oy)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = xi + (oy - yi) * (xj - xi) / (yj - yi)
    inside = (np.count_nonzero(straddle & (ox < xcross), axis=1) % 2) == 1
    on_edge = dist == 0.0
    inside = inside | on_edge

    dist = np.where(np.isfinite(dist), dist, np.nan)
    return dist, inside


def loglik_grad(a, b, c, d, y, x, want_grad=True):
    """Bernoulli log-likelihood of the clamped 4PL and its gradient.

    Returns ``(loglik, grad[a, b, c, d], n_clamped)``.  Clamped entries
    contribute zero gradient, which is the exact derivative of the
    clamped objective.
    """
    y = np.asarray(y)
    x = np.asarray(x, dtype=float)
    z = x - c
    s = expit(b * z)
    p = d + (a - d) * s
    lo, hi = PROB_CLAMP, 1.0 - PROB_CLAMP
    clamped = (p < lo) | (p > hi)
    pc = np.clip(p, lo, hi)
    pos = y == 1
    ll = float(np.sum(np.log(pc[pos])) + np.sum(np.log1p(-pc[~pos])))
    n_clamped = int(np.count_nonzero(clamped))
    if not want_grad:
        return ll, None, n_clamped
    w = np.where(pos, 1.0 / pc, -1.0 / (1.0 - pc))
    w[clamped] = 0.0
    ds = s * (1.0 - s)
    grad = np.array([
        np.dot(w, s),
        (a - d) * np.dot(w, ds * z),
        -(a - d) * b * np.sum(w * ds),
        np.dot(w, 1.0 - s),
    ])
    return ll, grad, n_clamped
