"""Quasi-static peg-on-plate contact model.

The peg is a rigid cylinder held by a Cartesian stiffness controller; the
plate is a rigid plane at ``surface_height`` with a circular hole.  Given a
commanded position the peg settles where the spring force balances the
contact constraints, and the sensed wrench follows from the location of the
supported part of the peg's bottom face.

All functions accept a single 3-vector or a batch of shape ``(B, 3)``.
Wrenches are plain arrays ordered ``(fx, fy, fz, mx, my, mz)`` in N and N*mm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WRENCH_CHANNELS = ("fx", "fy", "fz", "mx", "my", "mz")


@dataclass
class ContactConfig:
    peg_radius: float = 10.0
    hole_radius: float = 11.0
    hole_center: tuple[float, float] = (0.0, 0.0)
    surface_height: float = 0.0
    friction_coeff: float = 0.3
    # per-channel sigma, forces in N then moments in N*mm
    wrench_noise_sigma: tuple[float, ...] = (0.05, 0.05, 0.05, 0.5, 0.5, 0.5)
    insertion_depth_threshold: float = 3.0
    rng_seed: int = 0

    def __post_init__(self):
        self.hole_center = tuple(float(v) for v in self.hole_center)
        sigma = np.broadcast_to(np.asarray(self.wrench_noise_sigma, dtype=float), (6,))
        self.wrench_noise_sigma = tuple(float(s) for s in sigma)
        if not self.peg_radius > 0:
            raise ValueError("peg_radius must be positive")
        if not self.hole_radius > self.peg_radius:
            raise ValueError("hole_radius must exceed peg_radius")
        if self.friction_coeff < 0:
            raise ValueError("friction_coeff must be non-negative")
        if min(self.wrench_noise_sigma) < 0:
            raise ValueError("wrench_noise_sigma must be non-negative")
        if len(self.hole_center) != 2:
            raise ValueError("hole_center must be a 2-vector")

    @property
    def clearance(self) -> float:
        return self.hole_radius - self.peg_radius

    @property
    def noise_free(self) -> bool:
        return max(self.wrench_noise_sigma) == 0.0


@dataclass
class SimState:
    """Equilibrium position of the peg (bottom centre of its axis)."""

    position: np.ndarray
    inserted: np.ndarray | bool = False
    last_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))


def support_region(d, peg_radius: float = 10.0, hole_radius: float = 11.0):
    """Area and centroid of the part of the peg's bottom disk not over the hole.

    Parameters
    ----------
    d : array_like, shape (..., 2)
        Hole centre minus peg centre in the plate plane, mm.
    peg_radius, hole_radius : float
        Radii in mm, ``hole_radius > peg_radius``.

    Returns
    -------
    area : ndarray, shape (...)
        Supported area in mm^2.
    centroid : ndarray, shape (..., 2)
        Centroid of the supported region relative to the peg axis, mm.  It
        points along ``-d``; it is zero when the region is empty or the disks
        do not touch.
    """
    d = np.asarray(d, dtype=float)
    R, Rh = float(peg_radius), float(hole_radius)
    dist = np.hypot(d[..., 0], d[..., 1])
    full = np.pi * R * R

    lens = (dist > Rh - R) & (dist < R + Rh)
    D = np.where(lens, dist, 1.0)
    # signed distances of the radical line from the peg and hole centres
    a = (D * D + R * R - Rh * Rh) / (2.0 * D)
    b = D - a
    half_chord_sq = np.clip(R * R - a * a, 0.0, None)
    chord_term = half_chord_sq**1.5
    peg_seg = R * R * np.arccos(np.clip(a / R, -1.0, 1.0)) - a * np.sqrt(half_chord_sq)
    hole_seg = Rh * Rh * np.arccos(np.clip(b / Rh, -1.0, 1.0)) - b * np.sqrt(half_chord_sq)
    # first moments about the peg axis, measured along d
    lens_moment = 2.0 / 3.0 * chord_term + (hole_seg * D - 2.0 / 3.0 * chord_term)
    lens_area = peg_seg + hole_seg

    area = np.where(dist >= R + Rh, full, np.where(lens, full - lens_area, 0.0))
    offset = np.where(lens & (area > 0), -lens_moment / np.where(area > 0, area, 1.0), 0.0)
    unit = d / np.where(lens, D, 1.0)[..., None]
    centroid = offset[..., None] * unit
    return area, centroid


def support_region_area_fraction(d, peg_radius=10.0, hole_radius=11.0):
    area, _ = support_region(d, peg_radius, hole_radius)
    return area / (np.pi * peg_radius**2)


def _equilibrium(x_c, stiffness, cfg: ContactConfig, below_surface):
    """Noise-free equilibrium position and wrench for commanded ``x_c``.

    ``below_surface`` flags pegs that already sit inside the hole; their
    planar motion is limited by the hole wall.
    """
    x_c = np.asarray(x_c, dtype=float)
    K = np.broadcast_to(np.asarray(stiffness, dtype=float), x_c.shape)
    hole = np.asarray(cfg.hole_center)
    z0 = cfg.surface_height
    if not np.any(x_c[..., 2] < z0):
        # nothing touches the plate: free space everywhere
        return x_c.copy(), np.zeros(x_c.shape[:-1] + (6,))

    d = hole - x_c[..., :2]
    area, centroid = support_region(d, cfg.peg_radius, cfg.hole_radius)

    x = x_c.copy()
    wrench = np.zeros(x_c.shape[:-1] + (6,))

    in_hole = below_surface & (x_c[..., 2] < z0)
    if np.any(in_hole):
        # project the peg axis onto the disk the hole wall allows
        offset = -d
        r = np.hypot(offset[..., 0], offset[..., 1])
        scale = np.where(r > cfg.clearance, cfg.clearance / np.where(r > 0, r, 1.0), 1.0)
        clamped = hole + offset * scale[..., None]
        x[..., :2] = np.where(in_hole[..., None], clamped, x[..., :2])
        lateral = K[..., :2] * (x[..., :2] - x_c[..., :2])
        wrench[..., :2] = np.where(in_hole[..., None], lateral, 0.0)

    resting = ~in_hole & (area > 0) & (x_c[..., 2] < z0)
    fz = np.where(resting, K[..., 2] * (z0 - x_c[..., 2]), 0.0)
    x[..., 2] = np.where(resting, z0, x[..., 2])
    wrench[..., 2] = fz
    # r x (0, 0, fz) with r the support centroid relative to the peg axis
    wrench[..., 3] = np.where(resting, centroid[..., 1] * fz, 0.0)
    wrench[..., 4] = np.where(resting, -centroid[..., 0] * fz, 0.0)
    return x, wrench


def planar_offset(position, cfg: ContactConfig):
    position = np.asarray(position, dtype=float)
    hx, hy = cfg.hole_center
    return np.hypot(position[..., 0] - hx, position[..., 1] - hy)


def is_inserted(state: SimState, cfg: ContactConfig):
    """True iff the peg axis is inside the clearance and deep enough."""
    pos = np.asarray(state.position, dtype=float)
    depth = cfg.surface_height - pos[..., 2]
    return (planar_offset(pos, cfg) < cfg.clearance) & (depth > cfg.insertion_depth_threshold)


def resolve_equilibrium(x_c, stiffness, cfg: ContactConfig, prev: SimState, rng=None):
    """Settle the peg for commanded position ``x_c``.

    Returns the new :class:`SimState` and the sensed wrench.  Gaussian noise
    with ``cfg.wrench_noise_sigma`` is drawn from ``rng`` (a
    ``numpy.random.Generator``); pass ``None`` for a clean reading.
    """
    x_c = np.asarray(x_c, dtype=float)
    if not np.all(np.isfinite(x_c)):
        raise ValueError("commanded position must be finite")
    if np.any(np.asarray(stiffness) <= 0):
        raise ValueError("stiffness must be positive")
    prev_pos = np.asarray(prev.position, dtype=float)
    below = prev_pos[..., 2] < cfg.surface_height
    x, wrench = _equilibrium(x_c, stiffness, cfg, below)
    if rng is not None and not cfg.noise_free:
        wrench = wrench + rng.standard_normal(wrench.shape) * np.asarray(cfg.wrench_noise_sigma)
    state = SimState(position=x, last_wrench=wrench)
    state.inserted = is_inserted(state, cfg)
    return state, wrench


class ContactSim:
    """Batch of independent peg/plate environments sharing one geometry.

    Each row owns a generator, so the noise a row sees depends only on its
    own seed and on how many steps it has taken.
    """

    block = 280

    def __init__(self, cfg: ContactConfig, stiffness, seeds=None, n: int = 1):
        """``seeds`` holds one seed or ``Generator`` per row."""
        self.cfg = cfg
        self.stiffness = np.asarray(stiffness, dtype=float)
        if seeds is None:
            seeds = [cfg.rng_seed] if n == 1 else np.random.SeedSequence(cfg.rng_seed).spawn(n)
        self.rngs = [np.random.default_rng(s) for s in seeds]
        self.n = len(self.rngs)
        self.sigma = np.asarray(cfg.wrench_noise_sigma)
        self._buf = np.zeros((self.n, self.block, 6))
        self._ptr = np.full(self.n, self.block)
        self.position = np.zeros((self.n, 3))
        self.wrench = np.zeros((self.n, 6))

    def reset(self, position):
        self.position = np.array(np.broadcast_to(position, (self.n, 3)), dtype=float)
        self.wrench = np.zeros((self.n, 6))

    def _noise(self, active):
        if self.cfg.noise_free:
            return 0.0
        rows = np.flatnonzero(active & (self._ptr >= self.block))
        for i in rows:
            self._buf[i] = self.rngs[i].standard_normal((self.block, 6))
            self._ptr[i] = 0
        idx = np.minimum(self._ptr, self.block - 1)
        sample = self._buf[np.arange(self.n), idx]
        self._ptr = np.where(active, self._ptr + 1, self._ptr)
        return np.where(active[:, None], sample * self.sigma, 0.0)

    def step(self, x_c, active=None):
        """Advance active rows to commanded ``x_c`` of shape (n, 3)."""
        if active is None:
            active = np.ones(self.n, dtype=bool)
        below = self.position[:, 2] < self.cfg.surface_height
        x, wrench = _equilibrium(x_c, self.stiffness, self.cfg, below)
        wrench = wrench + self._noise(active)
        self.position = np.where(active[:, None], x, self.position)
        self.wrench = np.where(active[:, None], wrench, self.wrench)
        return self.wrench

    @property
    def inserted(self):
        return is_inserted(SimState(self.position), self.cfg)


class SpringWall:
    """Rigid plane at ``height`` pressed through the z stiffness only."""

    def __init__(self, stiffness, height: float = 0.0, n: int = 1):
        self.stiffness = np.asarray(stiffness, dtype=float)
        self.height = height
        self.n = n
        self.position = np.zeros((n, 3))
        self.wrench = np.zeros((n, 6))

    def reset(self, position):
        self.position = np.array(np.broadcast_to(position, (self.n, 3)), dtype=float)
        self.wrench = np.zeros((self.n, 6))

    def step(self, x_c, active=None):
        if active is None:
            active = np.ones(self.n, dtype=bool)
        kz = np.broadcast_to(self.stiffness, (self.n, 3))[:, 2]
        contact = x_c[:, 2] < self.height
        x = x_c.copy()
        x[:, 2] = np.where(contact, self.height, x_c[:, 2])
        w = np.zeros((self.n, 6))
        w[:, 2] = np.where(contact, kz * (self.height - x_c[:, 2]), 0.0)
        self.position = np.where(active[:, None], x, self.position)
        self.wrench = np.where(active[:, None], w, self.wrench)
        return self.wrench

    @property
    def inserted(self):
        return np.zeros(self.n, dtype=bool)
