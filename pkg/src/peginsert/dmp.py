"""Discrete dynamic movement primitives, one per Cartesian axis.

Transformation system (``tau`` is the demonstration duration)::

    tau * dz/dt = alpha * (beta * (g - y) - z) + s * f(x)
    tau * dy/dt = z
    dx/dt       = -canonical_decay * x

with ``beta = alpha / 4``, ``s = g - y0`` and ``f`` a normalised mixture of
Gaussian basis functions in the phase ``x`` multiplied by ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_SPAN = 1e-9


@dataclass
class Trajectory:
    timestamps: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim == 1:
            self.positions = self.positions[:, None]
        if len(self.timestamps) < 2:
            raise ValueError("a trajectory needs at least two samples")
        if len(self.timestamps) != len(self.positions):
            raise ValueError("timestamps and positions differ in length")
        steps = np.diff(self.timestamps)
        if np.any(steps <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.ptp(steps) > 1e-9:
            raise ValueError("trajectory must be uniformly sampled")

    @property
    def dt(self) -> float:
        return float(self.timestamps[1] - self.timestamps[0])

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])

    def __len__(self):
        return len(self.timestamps)


@dataclass
class DmpParams:
    """Learned primitive for every axis of a demonstration.

    ``weights`` has shape ``(n_axes, n_basis)``; ``y0``, ``g`` and
    ``degenerate`` have one entry per axis.
    """

    alpha: float
    beta: float
    canonical_decay: float  # 1/s
    weights: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    y0: np.ndarray
    g: np.ndarray
    duration: float
    degenerate: np.ndarray

    def __post_init__(self):
        for name in ("weights", "centers", "widths", "y0", "g"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.degenerate = np.asarray(self.degenerate, dtype=bool)
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if not np.isclose(self.beta, self.alpha / 4.0):
            raise ValueError("beta must equal alpha / 4 (critical damping)")
        if len(self.centers) < 1 or np.any(self.widths <= 0):
            raise ValueError("need at least one basis function with positive width")

    @property
    def n_basis(self) -> int:
        return len(self.centers)

    def forcing(self, phase):
        """Unscaled forcing term per axis, shape ``phase.shape + (n_axes,)``."""
        phase = np.asarray(phase, dtype=float)
        return _features(phase, self.centers, self.widths) @ self.weights.T

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "canonical_decay": self.canonical_decay,
            "weights": self.weights.tolist(),
            "centers": self.centers.tolist(),
            "widths": self.widths.tolist(),
            "y0": self.y0.tolist(),
            "g": self.g.tolist(),
            "duration": self.duration,
            "degenerate": self.degenerate.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DmpParams":
        return cls(**data)


def _basis(n_basis: int, alpha_x: float):
    # centres equally spaced in time, widths from the spacing of neighbours
    centers = np.exp(-alpha_x * np.linspace(0.0, 1.0, n_basis))
    if n_basis == 1:
        return centers, np.ones(1)
    gaps = np.diff(centers)
    widths = 1.0 / gaps**2
    return centers, np.append(widths, widths[-1])


def _features(phase, centers, widths):
    psi = np.exp(-widths * (phase[..., None] - centers) ** 2)
    return psi * phase[..., None] / np.maximum(psi.sum(axis=-1, keepdims=True), 1e-300)


def fit(demo: Trajectory, n_basis: int = 50, alpha: float = 25.0, alpha_x: float | None = None) -> DmpParams:
    """Learn a primitive per axis from a single demonstration.

    Velocities and accelerations come from finite differences; the basis
    weights solve the linear least-squares problem for the forcing term.
    ``alpha_x`` is the dimensionless canonical decay over the demonstration
    (default ``alpha / 3``).
    """
    if n_basis < 1:
        raise ValueError("n_basis must be at least 1")
    alpha_x = alpha / 3.0 if alpha_x is None else alpha_x
    beta = alpha / 4.0
    t = demo.timestamps - demo.timestamps[0]
    tau = demo.duration
    y = demo.positions
    dt = demo.dt
    yd = np.gradient(y, dt, axis=0, edge_order=2) if len(t) > 2 else np.gradient(y, dt, axis=0)
    ydd = np.gradient(yd, dt, axis=0, edge_order=2) if len(t) > 2 else np.zeros_like(y)

    y0, g = y[0].copy(), y[-1].copy()
    span = g - y0
    degenerate = np.abs(span) < DEGENERATE_SPAN
    scale = np.where(degenerate, 1.0, span)

    phase = np.exp(-alpha_x * t / tau)
    centers, widths = _basis(n_basis, alpha_x)
    f_target = tau**2 * ydd - alpha * (beta * (g - y) - tau * yd)
    phi = _features(phase, centers, widths)
    weights, *_ = np.linalg.lstsq(phi, f_target / scale, rcond=None)
    return DmpParams(
        alpha=alpha,
        beta=beta,
        canonical_decay=alpha_x / tau,
        weights=weights.T,
        centers=centers,
        widths=widths,
        y0=y0,
        g=g,
        duration=tau,
        degenerate=degenerate,
    )


def forcing_target(demo: Trajectory, params: DmpParams):
    """Forcing term the demonstration requires, divided by the goal span."""
    tau = params.duration
    y = demo.positions
    yd = np.gradient(y, demo.dt, axis=0, edge_order=2)
    ydd = np.gradient(yd, demo.dt, axis=0, edge_order=2)
    f = tau**2 * ydd - params.alpha * (params.beta * (params.g - y) - tau * yd)
    return f / np.where(params.degenerate, 1.0, params.g - params.y0)


def rollout_positions(params: DmpParams, new_y0, new_g, dt: float, n_steps: int):
    """Integrate the primitive with explicit Euler for a batch of start/goal pairs.

    ``new_y0`` and ``new_g`` broadcast to ``(B, n_axes)``; returns positions
    of shape ``(n_steps, B, n_axes)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    new_g = np.asarray(new_g, dtype=float)
    new_y0 = np.asarray(new_y0, dtype=float)
    if not (np.all(np.isfinite(new_g)) and np.all(np.isfinite(new_y0))):
        raise ValueError("start and goal must be finite")
    n_axes = params.weights.shape[0]
    shape = np.broadcast_shapes(np.atleast_2d(new_y0).shape, np.atleast_2d(new_g).shape, (1, n_axes))
    y = np.array(np.broadcast_to(new_y0, shape))
    g = np.array(np.broadcast_to(new_g, shape))
    scale = np.where(params.degenerate, 1.0, g - y)

    tau = params.duration
    # the phase does not depend on the state, so the forcing sequence is precomputed
    decay = 1.0 - params.canonical_decay * dt
    phase = decay ** np.arange(n_steps)
    forcing = params.forcing(phase)  # (n_steps, n_axes)

    a, ab = params.alpha, params.alpha * params.beta
    z = np.zeros_like(y)
    out = np.empty((n_steps,) + y.shape)
    for k in range(n_steps):
        out[k] = y
        zd = (ab * (g - y) - a * z + scale * forcing[k]) / tau
        y = y + z * (dt / tau)
        z = z + zd * dt
    return out


def rollout(params: DmpParams, new_y0, new_g, dt: float, duration: float) -> Trajectory:
    """Generate a trajectory from ``new_y0`` towards ``new_g``."""
    n_steps = int(round(duration / dt)) + 1
    pos = rollout_positions(params, new_y0, new_g, dt, n_steps)[:, 0, :]
    return Trajectory(np.arange(n_steps) * dt, pos)


def minimum_jerk(start, goal, duration: float, rate: float, n_samples: int | None = None) -> Trajectory:
    """Fifth-order minimum-jerk profile from ``start`` to ``goal``."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    start = np.atleast_1d(np.asarray(start, dtype=float))
    goal = np.atleast_1d(np.asarray(goal, dtype=float))
    if n_samples is None:
        n_samples = int(round(duration * rate))
    t = np.arange(n_samples) / rate
    s = np.clip(t / t[-1], 0.0, 1.0)
    blend = 10 * s**3 - 15 * s**4 + 6 * s**5
    # convex combination so both endpoints are reproduced exactly
    return Trajectory(t, start * (1.0 - blend[:, None]) + goal * blend[:, None])


def critically_damped_step(y0, g, t, alpha: float, tau: float):
    """Closed-form response of the unforced transformation system."""
    omega = alpha / (2.0 * tau)
    t = np.asarray(t, dtype=float)[:, None]
    return g + (np.asarray(y0) - g) * (1.0 + omega * t) * np.exp(-omega * t)
