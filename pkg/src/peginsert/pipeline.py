"""Experimental procedure: data collection, model training and corrective insertion.

Every trial or episode ``i`` of a run with seed ``s`` draws its randomness
from ``SeedSequence(s, spawn_key=(i,))``: the first child samples the
misalignment, the second feeds the wrench noise.  Results therefore do not
depend on how trials are batched or spread over worker processes.

Episodes run batched: one closed-loop simulation advances every pending
episode of a chunk in lock-step.  Each attempt is a DMP approach from the
demonstration start to the believed goal (which stops ``standoff`` above the
plate) followed by a constant-speed descent along -z under the
accommodation controller.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dmp as dmp_mod
from . import gp
from .config import DetectorSettings, ExperimentConfig, PolicyConfig
from .contact import ContactConfig, ContactSim
from .gac import GacConfig, LoopResult, simulate

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- setup ---


@dataclass
class InsertionSetup:
    """Everything an attempt needs besides the believed goal."""

    contact: ContactConfig
    gac: GacConfig
    dmp: dmp_mod.DmpParams
    start: np.ndarray
    policy: PolicyConfig
    detector: DetectorSettings

    @property
    def hole(self) -> np.ndarray:
        return np.asarray(self.contact.hole_center)

    @property
    def n_approach(self) -> int:
        return int(round(self.dmp.duration * self.gac.control_rate)) + 1

    @property
    def n_descent(self) -> int:
        return int(round(self.policy.approach_duration * self.gac.control_rate))


def make_demo(cfg: ExperimentConfig) -> dmp_mod.Trajectory:
    """Minimum-jerk demonstration from ``demo.start`` to the demo goal."""
    d = cfg.demo
    return dmp_mod.minimum_jerk(d.start, cfg.demo_goal(), d.duration, d.rate)


def make_setup(cfg: ExperimentConfig, demo: dmp_mod.Trajectory | None = None,
               params: dmp_mod.DmpParams | None = None) -> InsertionSetup:
    if params is None:
        demo = demo if demo is not None else make_demo(cfg)
        params = dmp_mod.fit(demo, cfg.dmp.n_basis, cfg.dmp.alpha)
    return InsertionSetup(cfg.contact, cfg.gac, params, np.array(params.y0), cfg.policy, cfg.detector)


def episode_streams(seed: int, index: int):
    """(sampling, noise) seed sequences of trial or episode ``index``."""
    return np.random.SeedSequence(seed, spawn_key=(index,)).spawn(2)


# ------------------------------------------------------------- sampling ---


def check_misalignment(d, contact: ContactConfig) -> np.ndarray:
    """Validate a training misalignment: contact and overlap must both occur."""
    d = np.asarray(d, dtype=float)
    r = np.hypot(*d)
    if not (contact.clearance < r <= contact.peg_radius):
        raise ValueError(
            f"misalignment |d| = {r:.4g} mm outside ({contact.clearance:.4g}, {contact.peg_radius:.4g}]"
        )
    return d


def sample_misalignment(rng: np.random.Generator, contact: ContactConfig) -> np.ndarray:
    """Per-axis uniform on [-R, R], resampled until clearance < |d| <= R."""
    R = contact.peg_radius
    while True:
        d = rng.uniform(-R, R, size=2)
        if contact.clearance < np.hypot(*d) <= R:
            return d


def sample_campaign_error(rng: np.random.Generator, cfg: ExperimentConfig) -> np.ndarray:
    if cfg.campaign.error_mode == "bias":
        return np.asarray(cfg.campaign.bias) + cfg.campaign.bias_sigma * rng.standard_normal(2)
    return sample_misalignment(rng, cfg.contact)


# -------------------------------------------------------------- attempts ---


def build_reference(setup: InsertionSetup, believed) -> np.ndarray:
    """Reference of shape ``(n, B, 3)``: DMP approach then descent along -z."""
    believed = np.atleast_2d(np.asarray(believed, dtype=float))
    goals = np.column_stack([believed, np.full(len(believed), setup.dmp.g[2])])
    dt = setup.gac.dt
    approach = dmp_mod.rollout_positions(setup.dmp, setup.start, goals, dt, setup.n_approach)
    steps = np.arange(1, setup.n_descent + 1)
    descent = np.repeat(approach[-1:], setup.n_descent, axis=0)
    descent[..., 2] -= setup.policy.descent_speed * steps[:, None]
    return np.concatenate([approach, descent])


def run_attempt(setup: InsertionSetup, believed, noise, record: bool = False) -> LoopResult:
    """One approach-and-descend attempt for a batch of believed goals.

    ``noise`` holds one ``numpy.random.Generator`` per row; they advance in
    place so successive attempts of an episode see fresh noise.
    """
    xr = build_reference(setup, believed)
    env = ContactSim(setup.contact, setup.gac.stiffness, seeds=noise)
    det = setup.detector.build(contact_force=setup.policy.contact_force)
    return simulate(xr, setup.gac, env, detector=det, detect_from=setup.n_approach,
                    stop_on_insert=True, record=record)


# -------------------------------------------------------------- dataset ---


@dataclass
class Dataset:
    trial_id: np.ndarray
    d: np.ndarray  # (n, 2) mm, hole minus believed goal
    wrench: np.ndarray  # (n, 6)
    converged: np.ndarray

    def __len__(self):
        return len(self.trial_id)

    def subset(self, mask) -> "Dataset":
        return Dataset(self.trial_id[mask], self.d[mask], self.wrench[mask], self.converged[mask])

    @classmethod
    def concat(cls, parts) -> "Dataset":
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("trial_id", "d", "wrench", "converged")))


def _collect_chunk(setup: InsertionSetup, seed: int, ids, forced):
    ds, noise = [], []
    for i in ids:
        sample_ss, noise_ss = episode_streams(seed, int(i))
        ds.append(forced if forced is not None else sample_misalignment(np.random.default_rng(sample_ss), setup.contact))
        noise.append(np.random.default_rng(noise_ss))
    d = np.array(ds)
    res = run_attempt(setup, setup.hole - d, noise)
    converged = res.converged & ~res.inserted
    return Dataset(np.asarray(ids), d, res.wrench, converged)


def _map_chunks(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, *zip(*tasks)))
    return [fn(*t) for t in tasks]


def collect_dataset(setup: InsertionSetup, n: int, seed: int, *, forced_d=None,
                    chunk: int = 200, jobs: int = 1) -> Dataset:
    """Sample ``n`` misalignments and record the steady wrench of each.

    Rows whose loop never settled keep their trailing-window mean but carry
    ``converged = False`` and are left out of training.
    """
    if n < 1:
        raise ValueError("need at least one trial")
    if forced_d is not None:
        forced_d = check_misalignment(forced_d, setup.contact)
    ids = np.arange(n)
    tasks = [(setup, seed, ids[i:i + chunk], forced_d) for i in range(0, n, chunk)]
    data = Dataset.concat(_map_chunks(_collect_chunk, tasks, jobs))
    logger.info("collected %d rows, %d converged", len(data), int(data.converged.sum()))
    return data


# ---------------------------------------------------------------- models ---


@dataclass
class ModelBundle:
    gpr: list  # magnitude regressors for d_x, d_y
    sign: list  # +/-1 regressors for sign(d_x), sign(d_y)
    dmp: dmp_mod.DmpParams | None = None
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "gpr": [m.to_dict() for m in self.gpr],
            "sign": [m.to_dict() for m in self.sign],
            "dmp": None if self.dmp is None else self.dmp.to_dict(),
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, data) -> "ModelBundle":
        return cls(
            gpr=[gp.GprModel.from_dict(m) for m in data["gpr"]],
            sign=[gp.GprModel.from_dict(m) for m in data["sign"]],
            dmp=None if data.get("dmp") is None else dmp_mod.DmpParams.from_dict(data["dmp"]),
            metrics=data.get("metrics", {}),
        )


def split_indices(n: int, train_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 2), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _init_kernel(cfg: ExperimentConfig, y):
    s = cfg.gp
    var = s.rbf_variance if s.rbf_variance is not None else (float(np.var(y)) or 1.0)
    return gp.KernelParams(np.full(6, s.lengthscale), var, s.white_fraction * var)


def _fit_one(X, y, cfg: ExperimentConfig, seed: int, mirror=None):
    s = cfg.gp
    return gp.fit(X, y, _init_kernel(cfg, y), restarts=s.restarts, max_iter=s.max_iter, tol=s.tol,
                  seed=seed, mirror=mirror)


def train_models(data: Dataset, cfg: ExperimentConfig, seed: int, *, jobs: int = 1,
                 dmp: dmp_mod.DmpParams | None = None) -> ModelBundle:
    """Fit the two magnitude regressors and two sign models on a train split.

    The sign models use the plate's mirror symmetry (see :mod:`peginsert.gp`)
    so that a reflected wrench always yields the reflected direction.
    Held-out sign accuracy and RMSE per axis are stored in ``metrics``.
    """
    usable = data.subset(data.converged)
    if len(usable) < 20:
        raise ValueError(f"need at least 20 converged rows, got {len(usable)}")
    train, test = split_indices(len(usable), cfg.gp.train_fraction, np.random.default_rng(seed))
    X, D = usable.wrench, usable.d
    S = np.where(D >= 0, 1.0, -1.0)
    jobs_args = [(X[train], D[train, a], cfg, seed + a) for a in range(2)]
    jobs_args += [(X[train], S[train, a], cfg, seed + 2 + a, m) for a, m in enumerate((gp.MIRROR_X, gp.MIRROR_Y))]
    fitted = _map_chunks(_fit_one, jobs_args, jobs)
    gpr, sign = fitted[:2], fitted[2:]

    pred = np.column_stack([gp.predict(m, X[test])[0] for m in gpr])
    signs = gp.classify_sign(sign, X[test])
    metrics = {
        "n_rows": len(data),
        "n_converged": len(usable),
        "n_train": len(train),
        "n_test": len(test),
        "sign_accuracy": [float(np.mean(signs[:, a] == S[test, a])) for a in range(2)],
        "rmse_mm": [float(np.sqrt(np.mean((pred[:, a] - D[test, a]) ** 2))) for a in range(2)],
        "log_likelihood": [m.log_likelihood for m in fitted],
    }
    logger.info("held-out sign accuracy %s, RMSE %s mm", metrics["sign_accuracy"], metrics["rmse_mm"])
    return ModelBundle(gpr=list(gpr), sign=list(sign), dmp=dmp, metrics=metrics)


def rmse_by_bucket(data: Dataset, kernels, contact: ContactConfig, *, n_splits: int = 50,
                   train_fraction: float = 0.8, n_buckets: int = 5, seed: int = 0) -> list[dict]:
    """Magnitude-model RMSE per |d| bucket over resampled train/test splits.

    The hyperparameters in ``kernels`` (one :class:`~peginsert.gp.GprModel`
    per axis) stay fixed; each split refits only the posterior.  Buckets
    split ``(clearance, R]`` evenly.  A bucket that no split ever populates
    is reported with ``mean = std = None``.
    """
    usable = data.subset(data.converged)
    edges = np.linspace(contact.clearance, contact.peg_radius, n_buckets + 1)
    r = np.hypot(usable.d[:, 0], usable.d[:, 1])
    bucket = np.clip(np.searchsorted(edges, r, side="left") - 1, 0, n_buckets - 1)
    per_split = np.full((n_splits, n_buckets), np.nan)
    rng = np.random.default_rng(seed)
    for s in range(n_splits):
        train, test = split_indices(len(usable), train_fraction, rng)
        err = np.empty((len(test), 2))
        for a, base in enumerate(kernels):
            model = base.with_data(usable.wrench[train], usable.d[train, a])
            err[:, a] = gp.predict(model, usable.wrench[test])[0] - usable.d[test, a]
        for b in range(n_buckets):
            sel = bucket[test] == b
            if sel.any():
                per_split[s, b] = np.sqrt(np.mean(err[sel] ** 2))
    rows = []
    for b in range(n_buckets):
        vals = per_split[:, b][~np.isnan(per_split[:, b])]
        rows.append({
            "bucket": b,
            "lo_mm": float(edges[b]),
            "hi_mm": float(edges[b + 1]),
            "n_splits": int(len(vals)),
            "mean": float(vals.mean()) if len(vals) else None,
            "std": float(vals.std()) if len(vals) else None,
        })
    return rows


# -------------------------------------------------------------- episodes ---


class Outcome(str, enum.Enum):
    SUCCESS = "Success"
    MAX_ATTEMPTS = "MaxAttempts"
    DIVERGED = "Diverged"
    NOT_CONVERGED = "NotConverged"


@dataclass
class EpisodeRecord:
    episode_id: int
    injected_error: np.ndarray
    attempts: int = 0
    corrections: list = field(default_factory=list)
    final_wrench: list = field(default_factory=list)  # one steady wrench per failed attempt
    outcome: Outcome | None = None
    believed: np.ndarray | None = None  # believed goal (plane) at the last attempt

    def to_row(self) -> dict:
        total = np.sum(self.corrections, axis=0) if self.corrections else np.zeros(2)
        return {
            "episode_id": self.episode_id,
            "dx_mm": float(self.injected_error[0]),
            "dy_mm": float(self.injected_error[1]),
            "attempts": self.attempts,
            "n_corrections": len(self.corrections),
            "total_correction_x_mm": float(total[0]),
            "total_correction_y_mm": float(total[1]),
            "outcome": self.outcome.value,
        }


def run_episodes(setup: InsertionSetup, errors, noise, models: ModelBundle | None,
                 ids=None) -> list[EpisodeRecord]:
    """Corrective insertion for a batch of goal-estimate errors.

    With ``models = None`` this is the open-loop baseline: a single attempt
    at the erroneous goal, no corrections.
    """
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    B = len(errors)
    ids = np.arange(B) if ids is None else np.asarray(ids)
    pol = setup.policy
    max_attempts = pol.max_attempts if models is not None else 1
    initial = setup.hole - errors
    believed = initial.copy()
    records = [EpisodeRecord(int(i), errors[b].copy()) for b, i in enumerate(ids)]
    pending = np.arange(B)
    for attempt in range(1, max_attempts + 1):
        if len(pending) == 0:
            break
        res = run_attempt(setup, believed[pending], [noise[b] for b in pending])
        keep = []
        for j, b in enumerate(pending):
            rec = records[b]
            rec.attempts = attempt
            rec.believed = believed[b].copy()
            if res.inserted[j]:
                rec.outcome = Outcome.SUCCESS
            elif not res.converged[j]:
                rec.outcome = Outcome.NOT_CONVERGED
            else:
                rec.final_wrench.append(res.wrench[j].copy())
                keep.append(j)
        if not keep:
            pending = np.array([], dtype=int)
            continue
        keep = np.array(keep)
        rows = pending[keep]
        if attempt == max_attempts:
            for b in rows:
                records[b].outcome = Outcome.MAX_ATTEMPTS
            pending = np.array([], dtype=int)
            continue
        step = pol.step_size * gp.classify_sign(models.sign, res.wrench[keep]).astype(float)
        survivors = []
        for b, corr in zip(rows, step):
            records[b].corrections.append(corr)
            believed[b] = believed[b] + corr
            if np.hypot(*(believed[b] - initial[b])) > pol.divergence_limit:
                records[b].outcome = Outcome.DIVERGED
                records[b].believed = believed[b].copy()
            else:
                survivors.append(b)
        pending = np.array(survivors, dtype=int)
    return records


def run_insertion_episode(error, models: ModelBundle | None, setup: InsertionSetup,
                          seed: int = 0, episode_id: int = 0) -> EpisodeRecord:
    """Single episode with goal-estimate error ``error`` (hole minus believed goal)."""
    noise = np.random.default_rng(episode_streams(seed, episode_id)[1])
    return run_episodes(setup, [error], [noise], models, ids=[episode_id])[0]


@dataclass
class CampaignResult:
    errors: np.ndarray
    corrected: list  # EpisodeRecord per episode, learned corrections
    baseline: list  # EpisodeRecord per episode, open loop

    @staticmethod
    def summarize(records, max_attempts: int) -> dict:
        counts = Counter(r.outcome.value for r in records)
        hist = Counter(r.attempts for r in records if r.outcome is Outcome.SUCCESS)
        n = len(records)
        return {
            "n_episodes": n,
            "successes": counts.get(Outcome.SUCCESS.value, 0),
            "success_rate": counts.get(Outcome.SUCCESS.value, 0) / n if n else 0.0,
            "outcomes": {o.value: counts.get(o.value, 0) for o in Outcome},
            "attempt_histogram": {str(k): hist.get(k, 0) for k in range(1, max_attempts + 1)},
        }

    def summary(self, max_attempts: int) -> dict:
        return {
            "lfd_sl": self.summarize(self.corrected, max_attempts),
            "lfd": self.summarize(self.baseline, max_attempts),
        }


def _campaign_chunk(setup, models, cfg: ExperimentConfig, seed, ids, forced):
    errors, streams = [], []
    for k, i in enumerate(ids):
        sample_ss, noise_ss = episode_streams(seed, int(i))
        errors.append(forced[k] if forced is not None else sample_campaign_error(np.random.default_rng(sample_ss), cfg))
        streams.append(noise_ss)
    errors = np.array(errors)
    corrected = run_episodes(setup, errors, [np.random.default_rng(s) for s in streams], models, ids)
    baseline = run_episodes(setup, errors, [np.random.default_rng(s) for s in streams], None, ids)
    return errors, corrected, baseline


def evaluate_campaign(setup: InsertionSetup, models: ModelBundle, cfg: ExperimentConfig, n: int,
                      seed: int, *, first: int = 0, errors=None, chunk: int = 100,
                      jobs: int = 1) -> CampaignResult:
    """Run episodes ``first .. first + n - 1`` with and without corrections.

    Both controllers see the same goal-estimate errors and the same noise
    streams.  ``errors`` overrides the sampler with explicit values.
    """
    if n < 1:
        raise ValueError("need at least one episode")
    if errors is not None:
        errors = np.atleast_2d(np.asarray(errors, dtype=float))
        if len(errors) != n:
            raise ValueError("errors must have one row per episode")
    ids = np.arange(first, first + n)
    tasks = []
    for i in range(0, n, chunk):
        forced = None if errors is None else errors[i:i + chunk]
        tasks.append((setup, models, cfg, seed, ids[i:i + chunk], forced))
    parts = _map_chunks(_campaign_chunk, tasks, jobs)
    return CampaignResult(
        errors=np.concatenate([p[0] for p in parts]),
        corrected=[r for p in parts for r in p[1]],
        baseline=[r for p in parts for r in p[2]],
    )
