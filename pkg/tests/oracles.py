"""Independent reference computations used by the test-suite."""

import numpy as np


# Monte Carlo reference for d = (0, 5), R = 10, R_h = 11, computed once before
# the closed form existed and frozen here.  Standard errors of that run were
# about 0.024 mm^2 (area) and 0.002 mm (centroid coordinates).
FROZEN_SUPPORT_D05 = {
    "d": (0.0, 5.0),
    "area": 73.20227,
    "centroid": (-0.0022, -6.27920),
}


def mc_support_region(d, peg_radius=10.0, hole_radius=11.0, n=10_000_000, seed=0, chunk=1_000_000,
                      return_se=False):
    """Monte Carlo area and centroid of the peg disk not lying over the hole.

    ``d`` is the hole centre relative to the peg axis.  With
    ``return_se=True`` the standard errors of the area and of both centroid
    coordinates are returned as a third item.
    """
    rng = np.random.default_rng(seed)
    d = np.asarray(d, dtype=float)
    inside = 0
    sx = sy = sxx = syy = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        # rejection sampling in the bounding square keeps the oracle free of polar tricks
        p = rng.uniform(-peg_radius, peg_radius, size=(m, 2))
        in_peg = p[:, 0] ** 2 + p[:, 1] ** 2 <= peg_radius**2
        q = p[in_peg]
        off_hole = (q[:, 0] - d[0]) ** 2 + (q[:, 1] - d[1]) ** 2 > hole_radius**2
        s = q[off_hole]
        inside += s.shape[0]
        sx += s[:, 0].sum()
        sy += s[:, 1].sum()
        sxx += (s[:, 0] ** 2).sum()
        syy += (s[:, 1] ** 2).sum()
        done += m
    box = (2 * peg_radius) ** 2
    frac = inside / n
    area = box * frac
    if inside == 0:
        centroid = np.zeros(2)
        se = np.array([box * np.sqrt(1.0 / n), np.inf, np.inf])
    else:
        centroid = np.array([sx / inside, sy / inside])
        var = np.array([sxx / inside, syy / inside]) - centroid**2
        se = np.r_[box * np.sqrt(frac * (1 - frac) / n), np.sqrt(np.maximum(var, 0.0) / inside)]
    if return_se:
        return area, centroid, se
    return area, centroid


def lens_area(r1, r2, dist):
    """Closed-form intersection area of two circles (textbook formula)."""
    if dist >= r1 + r2:
        return 0.0
    if dist <= abs(r1 - r2):
        return np.pi * min(r1, r2) ** 2
    a1 = r1**2 * np.arccos((dist**2 + r1**2 - r2**2) / (2 * dist * r1))
    a2 = r2**2 * np.arccos((dist**2 + r2**2 - r1**2) / (2 * dist * r2))
    a3 = 0.5 * np.sqrt((-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) * (dist + r1 + r2))
    return a1 + a2 - a3


def dense_gp_posterior(K_train, k_star, k_ss, y):
    """GP posterior through an explicit matrix inverse."""
    Kinv = np.linalg.inv(K_train)
    mean = k_star @ Kinv @ y
    var = k_ss - np.einsum("ij,jk,ik->i", k_star, Kinv, k_star)
    return mean, var


def central_difference(f, theta, rel_step=1e-5):
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        h = rel_step * max(abs(theta[i]), 1.0)
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (f(tp) - f(tm)) / (2 * h)
    return g
