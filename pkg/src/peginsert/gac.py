"""Generalized accommodation controller and the closed loop around it.

The controller adds a discounted integral of the sensed force to the
increments of a reference trajectory::

    I[k]   = gamma * I[k-1] + K_a * f[k]
    x_c[k] = x_c[k-1] + (x_r[k] - x_r[k-1]) + I[k]

so that, against a stiff obstacle and a reference advancing at ``v`` per
step, the contact force settles at ``v * (1 - gamma) / K_a``.

The loop in :func:`simulate` runs a batch of independent episodes in
lock-step; single-episode helpers wrap it with a batch of one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

logger = logging.getLogger(__name__)

AXES = ("x", "y", "z")


@dataclass
class GacConfig:
    """Gains of the stiffness controller and of the accommodation loop.

    ``gamma`` and ``accommodation`` may carry a leading batch dimension so
    that one :func:`simulate` call sweeps several controllers.
    """

    stiffness: tuple = (10.0, 10.0, 2.0)  # N/mm
    accommodation: tuple = (0.001, 0.001, 0.001)  # mm/N
    gamma: float = 0.5
    control_rate: float = 280.0  # Hz
    active_axes: tuple = ("z",)

    def __post_init__(self):
        self.stiffness = np.broadcast_to(np.asarray(self.stiffness, dtype=float), (3,))
        self.accommodation = np.asarray(self.accommodation, dtype=float)
        if self.accommodation.ndim == 0:
            self.accommodation = np.full(3, float(self.accommodation))
        self.active_axes = tuple(self.active_axes)
        g = np.asarray(self.gamma, dtype=float)
        if np.any(g <= 0) or np.any(g >= 1):
            raise ValueError("gamma must lie in (0, 1)")
        if np.any(self.accommodation < 0):
            raise ValueError("accommodation gains must be non-negative")
        if np.any(self.stiffness <= 0):
            raise ValueError("stiffness must be positive")
        if not self.control_rate > 0:
            raise ValueError("control_rate must be positive")
        unknown = set(self.active_axes) - set(AXES)
        if unknown:
            raise ValueError(f"unknown axes {sorted(unknown)}")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate

    @property
    def axis_mask(self) -> np.ndarray:
        return np.array([a in self.active_axes for a in AXES])


@dataclass
class GacState:
    x_c: np.ndarray
    integral: np.ndarray = None
    k: int = 0

    def __post_init__(self):
        self.x_c = np.asarray(self.x_c, dtype=float)
        if self.integral is None:
            self.integral = np.zeros_like(self.x_c)


def gac_step(state: GacState, delta_xr, f, cfg: GacConfig) -> GacState:
    """One controller update from the reference increment and sensed force.

    Only the force part of the wrench enters; inactive axes follow the
    reference increments unchanged.
    """
    gamma = np.asarray(cfg.gamma, dtype=float)
    gamma = gamma.reshape(gamma.shape + (1,))
    integral = np.where(cfg.axis_mask, gamma * state.integral + cfg.accommodation * f, 0.0)
    x_c = state.x_c + delta_xr + integral
    return GacState(x_c=x_c, integral=integral, k=state.k + 1)


def steady_state_force(v, gamma, accommodation):
    """Contact force the loop settles at for a reference speed ``v`` (mm/step)."""
    accommodation = np.asarray(accommodation, dtype=float)
    if np.any(accommodation == 0):
        raise ValueError("zero accommodation gain: contact force grows without bound")
    return np.abs(v) * (1.0 - np.asarray(gamma)) / accommodation


class NotConverged(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class Trace:
    """Per-step record of one episode (z components of the positions)."""

    t: np.ndarray
    xr: np.ndarray
    xc: np.ndarray
    x: np.ndarray
    wrench: np.ndarray

    def __len__(self):
        return len(self.t)


@dataclass
class LoopResult:
    converged: np.ndarray
    steps: np.ndarray  # step index at which steady state was declared, -1 if never
    wrench: np.ndarray  # trailing-window mean wrench
    inserted: np.ndarray
    n_steps: np.ndarray  # steps taken by each row
    final_command: np.ndarray
    final_position: np.ndarray
    traces: list = field(default_factory=list)


@dataclass
class Detector:
    """Trailing-window steady-state test on block-averaged wrench samples.

    The window is split into blocks of ``block`` samples; a row is steady
    once the last ``window // block`` block means span less than the
    per-channel tolerance.  Averaging first keeps sensor noise from masking
    convergence.
    """

    window: int = 280
    block: int = 28
    force_tol: float = 0.05
    moment_tol: float = 0.5
    contact_force: float | None = None

    @property
    def n_blocks(self) -> int:
        return max(self.window // self.block, 1)

    @property
    def tol(self) -> np.ndarray:
        return np.array([self.force_tol] * 3 + [self.moment_tol] * 3)


def simulate(
    xr,
    cfg: GacConfig,
    env,
    *,
    detector: Detector | None = None,
    detect_from: int = 0,
    stop_on_insert: bool = False,
    record: bool = False,
) -> LoopResult:
    """Run the closed loop reference -> GAC -> environment for a batch.

    Parameters
    ----------
    xr : ndarray, shape (n, B, 3)
        Reference positions per step and episode.
    env : ContactSim or SpringWall
        Batched environment with ``reset``, ``step`` and ``inserted``.
    detect_from : int
        First step at which samples count towards the steady-state window.
    stop_on_insert : bool
        Freeze a row as soon as its peg counts as inserted.
    """
    xr = np.asarray(xr, dtype=float)
    if xr.ndim == 2:
        xr = xr[:, None, :]
    n, B = xr.shape[:2]
    det = detector or Detector()
    nb, blk, tol = det.n_blocks, det.block, det.tol

    state = GacState(x_c=xr[0].copy())
    env.reset(xr[0])
    active = np.ones(B, dtype=bool)
    wrench = env.step(state.x_c, active)

    converged = np.zeros(B, dtype=bool)
    steps = np.full(B, -1)
    taken = np.full(B, n - 1)
    inserted = np.zeros(B, dtype=bool)
    ring = np.zeros((B, nb, 6))
    streak = np.zeros(B, dtype=int)
    block_sum = np.zeros((B, 6))
    n_filled = 0

    if record:
        rec_xc = np.empty((n, B, 3))
        rec_x = np.empty((n, B, 3))
        rec_w = np.empty((n, B, 6))
        rec_xc[0], rec_x[0], rec_w[0] = state.x_c, env.position, wrench

    def _accumulate(k):
        nonlocal block_sum, n_filled
        if k < detect_from:
            return
        block_sum += wrench
        n_filled += 1
        if n_filled < blk:
            return
        mean = block_sum / blk
        # finished rows keep the window they were judged on
        ring[active] = np.concatenate([ring[active, 1:], mean[active, None]], axis=1)
        eligible = active.copy()
        if det.contact_force is not None:
            eligible &= np.abs(mean[:, 2]) > det.contact_force
        streak[:] = np.where(eligible, streak + 1, 0)
        span = ring.max(axis=1) - ring.min(axis=1)
        done = active & (streak >= nb) & np.all(span < tol, axis=1)
        converged[done] = True
        steps[done] = k
        taken[done] = k
        active[done] = False
        block_sum = np.zeros((B, 6))
        n_filled = 0

    def _check_insert(k):
        if not stop_on_insert:
            return
        now = active & env.inserted
        inserted[now] = True
        taken[now] = k
        active[now] = False

    _check_insert(0)
    _accumulate(0)
    for k in range(1, n):
        if not active.any():
            break
        new = gac_step(state, xr[k] - xr[k - 1], wrench[:, :3], cfg)
        state = GacState(
            x_c=np.where(active[:, None], new.x_c, state.x_c),
            integral=np.where(active[:, None], new.integral, state.integral),
            k=new.k,
        )
        wrench = env.step(state.x_c, active)
        if record:
            rec_xc[k], rec_x[k], rec_w[k] = state.x_c, env.position, wrench
        _check_insert(k)
        _accumulate(k)

    if not stop_on_insert:
        inserted = env.inserted
    traces = []
    if record:
        t = np.arange(n) * cfg.dt
        for i in range(B):
            m = taken[i] + 1
            traces.append(Trace(t[:m], xr[:m, i], rec_xc[:m, i], rec_x[:m, i], rec_w[:m, i]))
    return LoopResult(
        converged=converged,
        steps=steps,
        wrench=ring.mean(axis=1),
        inserted=inserted,
        n_steps=taken,
        final_command=state.x_c,
        final_position=env.position.copy(),
        traces=traces,
    )


def constant_velocity_reference(start, v: float, n_steps: int, axis: int = 2):
    """Reference advancing ``v`` mm per step along ``-axis`` from ``start``."""
    xr = np.tile(np.asarray(start, dtype=float), (n_steps, 1))
    xr[:, axis] -= v * np.arange(n_steps)
    return xr


def run_to_steady_state(reference, cfg: GacConfig, env, window: int = 280, tol: float = 0.05,
                        moment_tol: float = 0.5, block: int = 28):
    """Step one episode until its wrench settles.

    ``reference`` is a :class:`~peginsert.dmp.Trajectory` or an ``(n, 3)``
    array sampled at the control rate.  Returns the trailing-window mean
    wrench and the full :class:`Trace`; raises :class:`NotConverged`
    (carrying the trace) if the reference runs out first.
    """
    xr = getattr(reference, "positions", reference)
    det = Detector(window=window, block=block, force_tol=tol, moment_tol=moment_tol)
    res = simulate(np.asarray(xr)[:, None, :], cfg, env, detector=det, record=True)
    trace = res.traces[0]
    if not res.converged[0]:
        raise NotConverged(f"no steady state within {len(trace)} steps", trace)
    logger.debug("steady state after %d steps", res.steps[0])
    return res.wrench[0], trace


def sweep_configs(cfg: GacConfig, gammas, accommodations) -> GacConfig:
    """Batch config whose rows enumerate ``gammas`` x ``accommodations``."""
    g, a = np.meshgrid(np.asarray(gammas, float), np.asarray(accommodations, float), indexing="ij")
    ka = np.repeat(a.reshape(-1, 1), 3, axis=1)
    return replace(cfg, gamma=g.ravel(), accommodation=ka)


def spring_wall_sweep(cfg: GacConfig, gammas, accommodations, speeds, n_steps: int = 8400,
                      detector: Detector | None = None, overshoot_tol: float = 0.01) -> list[dict]:
    """Steady force against a spring wall over a grid of controller settings.

    Every combination of ``gammas`` x ``accommodations`` x ``speeds`` runs
    as one row of a batched simulation starting at the wall.  A row is
    flagged ``oscillatory`` when its force overshoots the predicted value by
    more than ``overshoot_tol`` (relative).
    """
    from .contact import SpringWall

    grid = [(g, a, v) for g in gammas for a in accommodations for v in speeds]
    if not grid:
        raise ValueError("empty sweep grid")
    g, a, v = (np.array(col, dtype=float) for col in zip(*grid))
    if np.any(a <= 0):
        raise ValueError("accommodation gains in a sweep must be positive")
    batch = replace(cfg, gamma=g, accommodation=np.repeat(a[:, None], 3, axis=1))
    xr = np.zeros((n_steps, len(grid), 3))
    xr[..., 2] = -np.arange(n_steps)[:, None] * v
    env = SpringWall(cfg.stiffness, n=len(grid))
    res = simulate(xr, batch, env, detector=detector or Detector(), record=True)
    predicted = steady_state_force(v, g, a)
    rows = []
    for i, (gi, ai, vi) in enumerate(grid):
        peak = float(np.max(res.traces[i].wrench[:, 2]))
        measured = float(res.wrench[i, 2])
        rows.append({
            "gamma": gi,
            "K_a_mm_per_N": ai,
            "v_mm_per_step": vi,
            "predicted_f_N": float(predicted[i]),
            "measured_f_N": measured,
            "rel_error": (measured - predicted[i]) / predicted[i] if predicted[i] else float("nan"),
            "steps_to_converge": int(res.steps[i]),
            "converged": bool(res.converged[i]),
            "oscillatory": bool(peak > (1.0 + overshoot_tol) * predicted[i]),
        })
    return rows
