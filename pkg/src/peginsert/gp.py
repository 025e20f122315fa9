"""Exact Gaussian-process regression from wrenches to misalignment.

Kernel: anisotropic RBF plus white noise.  Inputs are standardised per
channel before the kernel sees them; the prior mean is zero.  Sign models
are the same regressor fitted on +/-1 labels and thresholded at zero.

A model may carry a ``mirror``: a +/-1 vector describing how a reflection
of the plate acts on the wrench channels.  The RBF part is then replaced by
its odd projection ``k(w, w') - k(w, M w')``, which is what the plain kernel
gives after augmenting the data with mirrored copies and negated targets,
at the cost of the original ``n`` points.  Predictions flip sign exactly
under the reflection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.linalg.lapack import dpotri
from scipy.optimize import minimize

logger = logging.getLogger(__name__)

JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
LOG_BOUNDS = (np.log(1e-3), np.log(1e3))
VAR_BOUNDS = (np.log(1e-10), np.log(1e4))
# the optimiser keeps the white term above this floor; tinier values only
# make the kernel matrix ill-conditioned without changing predictions
WHITE_BOUNDS = (np.log(1e-6), np.log(1e4))
TIE_TOL = 1e-12  # |mean| below this is a tie in classify_sign (labels are +/-1)
EXP_CUTOFF = 69.0  # exp(-69) ~ 1e-30

# how a reflection of the x (resp. y) axis acts on (fx, fy, fz, mx, my, mz);
# moments are pseudovectors and pick up the extra determinant sign
MIRROR_X = np.array([-1.0, 1.0, 1.0, 1.0, -1.0, -1.0])
MIRROR_Y = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])


class GPFitError(RuntimeError):
    pass


@dataclass
class KernelParams:
    lengthscales: np.ndarray
    rbf_variance: float = 1.0
    white_variance: float = 0.01

    def __post_init__(self):
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(self.lengthscales <= 0) or self.rbf_variance <= 0 or self.white_variance <= 0:
            raise ValueError("kernel parameters must be strictly positive")

    @property
    def theta(self) -> np.ndarray:
        return np.log(np.r_[self.lengthscales, self.rbf_variance, self.white_variance])

    @classmethod
    def from_theta(cls, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[:-2]), float(np.exp(theta[-2])), float(np.exp(theta[-1])))

    def to_dict(self):
        return {
            "lengthscales": self.lengthscales.tolist(),
            "rbf_variance": self.rbf_variance,
            "white_variance": self.white_variance,
        }


def rbf(A, B, kernel: KernelParams):
    """RBF cross-covariance between rows of ``A`` and ``B`` (already scaled)."""
    a = A / kernel.lengthscales
    b = B / kernel.lengthscales
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    # exponents beyond the cut-off are flushed to zero: underflowing exp and
    # subnormal entries both slow the dense linear algebra down badly
    arg = np.clip(0.5 * sq, 0.0, EXP_CUTOFF)
    k = np.exp(-arg)
    k[arg >= EXP_CUTOFF] = 0.0
    return kernel.rbf_variance * k


def signal_kernel(A, B, kernel: KernelParams, mirror=None):
    """Noise-free part of the covariance, odd-projected when ``mirror`` is set."""
    K = rbf(A, B, kernel)
    if mirror is not None:
        K -= rbf(A, B * mirror, kernel)
    return K


def _factor(K):
    """Cholesky factor of ``K`` with escalating diagonal jitter."""
    scale = np.mean(np.diag(K))
    for jitter in JITTERS:
        try:
            Kj = K + jitter * scale * np.eye(len(K)) if jitter else K
            return cholesky(Kj, lower=True, check_finite=False), jitter
        except LinAlgError:
            continue
    raise GPFitError("kernel matrix not positive definite even with jitter 1e-4")


def _lengthscale_grad(WK, X, Y, lengthscales):
    """Derivative of ``0.5 * sum(WK)`` w.r.t. log lengthscales, WK over rows of X vs Y."""
    # sum_ij WK_ij (x_id - y_jd)^2 expanded into row and column sums
    quad = (X * X).T @ WK.sum(axis=1) + (Y * Y).T @ WK.sum(axis=0) - 2.0 * np.einsum("id,id->d", X, WK @ Y)
    return 0.5 * quad / lengthscales**2


def log_marginal_likelihood(theta, X, y, grad: bool = False, mirror=None):
    """Log evidence of standardised inputs ``X`` and targets ``y``.

    With ``grad=True`` also returns the derivative with respect to the log
    hyperparameters ``(log lengthscales, log rbf_variance, log white_variance)``.
    """
    kernel = KernelParams.from_theta(theta)
    n = len(X)
    diag = np.diag_indices(n)
    Kplain = rbf(X, X, kernel)
    Kmir = rbf(X, X * mirror, kernel) if mirror is not None else None
    K = Kplain - Kmir if mirror is not None else Kplain.copy()
    K[diag] += kernel.white_variance
    L, _ = _factor(K)
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)
    if not np.isfinite(lml):
        raise GPFitError("non-finite marginal likelihood")
    if not grad:
        return lml
    Kinv, info = dpotri(L, lower=1)
    if info != 0:
        raise GPFitError("could not invert the kernel matrix")
    # only the lower triangle is filled in (the upper one is zero); build
    # W = alpha alpha^T - K^-1 in place
    W = Kinv
    W += Kinv.T
    W[diag] *= 0.5
    W *= -1.0
    W += alpha[:, None] * alpha[None, :]
    g = np.empty(len(theta))
    WK = W * Kplain
    g[:-2] = _lengthscale_grad(WK, X, X, kernel.lengthscales)
    g[-2] = 0.5 * WK.sum()
    if mirror is not None:
        WK = np.multiply(W, Kmir, out=WK)
        g[:-2] -= _lengthscale_grad(WK, X, X * mirror, kernel.lengthscales)
        g[-2] -= 0.5 * WK.sum()
    g[-1] = 0.5 * kernel.white_variance * np.trace(W)
    return lml, g


@dataclass
class Normalizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X, mirror=None):
        X = np.asarray(X, dtype=float)
        if mirror is not None:
            # statistics of the mirrored data set: odd channels get mean zero
            X = np.vstack([X, X * mirror])
        scale = X.std(axis=0)
        # channels that never vary (e.g. clean lateral forces) pass through unscaled
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(X.mean(axis=0), scale)

    def __call__(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


@dataclass
class GprModel:
    X: np.ndarray
    y: np.ndarray
    kernel: KernelParams
    normalizer: Normalizer
    mirror: np.ndarray | None = None
    chol_L: np.ndarray = None
    alpha_vec: np.ndarray = None
    log_likelihood: float = float("nan")

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        if self.mirror is not None:
            self.mirror = np.asarray(self.mirror, dtype=float)
        if self.chol_L is None:
            self.refactor()

    @property
    def Xs(self):
        return self.normalizer(self.X)

    def covariance(self) -> np.ndarray:
        """Training covariance ``K(X, X) + white * I`` in standardised inputs."""
        Xs = self.Xs
        return signal_kernel(Xs, Xs, self.kernel, self.mirror) + self.kernel.white_variance * np.eye(len(Xs))

    def refactor(self):
        self.chol_L, jitter = _factor(self.covariance())
        if jitter:
            logger.debug("factorised with relative jitter %g", jitter)
        self.alpha_vec = cho_solve((self.chol_L, True), self.y)
        self.log_likelihood = float(
            -0.5 * self.y @ self.alpha_vec
            - np.log(np.diag(self.chol_L)).sum()
            - 0.5 * len(self.y) * np.log(2 * np.pi)
        )

    def with_data(self, X, y) -> "GprModel":
        """Same hyperparameters and normaliser, new training set."""
        return GprModel(X, y, self.kernel, self.normalizer, self.mirror)

    def to_dict(self):
        return {
            "kernel": self.kernel.to_dict(),
            "normalizer": {"mean": self.normalizer.mean.tolist(), "scale": self.normalizer.scale.tolist()},
            "mirror": None if self.mirror is None else self.mirror.tolist(),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        norm = Normalizer(np.asarray(data["normalizer"]["mean"]), np.asarray(data["normalizer"]["scale"]))
        return cls(data["X"], data["y"], KernelParams(**data["kernel"]), norm, data.get("mirror"))


def default_kernel(n_dims: int = 6, y=None) -> KernelParams:
    var = float(np.var(y)) if y is not None and np.var(y) > 0 else 1.0
    return KernelParams(np.ones(n_dims), var, 0.01 * var)


def fit(X, y, init: KernelParams | None = None, *, restarts: int = 4, max_iter: int = 200,
        tol: float = 1e-6, seed: int = 0, optimize: bool = True, mirror=None) -> GprModel:
    """Fit a GP, choosing hyperparameters by maximum marginal likelihood.

    The first start is ``init``; the remaining ``restarts - 1`` starts
    perturb it by a standard normal in log space.  Optimisation uses
    L-BFGS-B on the analytic gradient and stops once an iteration improves
    the log likelihood by less than ``tol``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(X) < 2:
        raise ValueError("need at least two training points")
    if len(X) != len(y):
        raise ValueError("X and y differ in length")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    if mirror is not None:
        mirror = np.asarray(mirror, dtype=float)
    norm = Normalizer.fit(X, mirror)
    Xs = norm(X)
    init = init or default_kernel(X.shape[1], y)
    if not optimize:
        return GprModel(X, y, init, norm, mirror)

    def objective(theta):
        try:
            lml, g = log_marginal_likelihood(theta, Xs, y, grad=True, mirror=mirror)
        except GPFitError:
            return 1e25, np.zeros_like(theta)
        return -lml, -g

    rng = np.random.default_rng(seed)
    bounds = [LOG_BOUNDS] * X.shape[1] + [VAR_BOUNDS, WHITE_BOUNDS]
    lo, hi = np.array(bounds).T
    best = None
    for r in range(max(restarts, 1)):
        theta0 = init.theta if r == 0 else init.theta + rng.standard_normal(init.theta.size)
        theta0 = np.clip(theta0, lo, hi)
        f0 = objective(theta0)[0]
        # scipy's ftol is relative to |f|; convert the absolute tolerance
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_iter, "ftol": tol / max(abs(f0), 1.0)})
        logger.debug("restart %d: lml=%.4f after %d iterations", r, -res.fun, res.nit)
        if res.fun < 1e25 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise GPFitError("marginal likelihood could not be evaluated at any start")
    return GprModel(X, y, KernelParams.from_theta(best.x), norm, mirror)


def predict(model: GprModel, w):
    """Posterior mean and variance at wrench(es) ``w``.

    Accepts a single 6-vector or an ``(m, 6)`` batch.  The variance includes
    the white-noise term and is clamped at zero.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("wrench must be finite")
    single = w.ndim == 1
    ws = model.normalizer(np.atleast_2d(w))
    ks = signal_kernel(ws, model.Xs, model.kernel, model.mirror)
    mean = ks @ model.alpha_vec
    v = solve_triangular(model.chol_L, ks.T, lower=True)
    prior = np.full(len(ws), model.kernel.rbf_variance)
    if model.mirror is not None:
        a = ws / model.kernel.lengthscales
        prior -= model.kernel.rbf_variance * np.exp(-0.5 * np.sum((a - a * model.mirror) ** 2, axis=1))
    var = prior + model.kernel.white_variance - (v * v).sum(axis=0)
    var = np.where(var < 1e-12, np.maximum(var, 0.0), var)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def classify_sign(models, w):
    """Per-axis direction from peg to hole; a zero posterior mean maps to +1.

    Means within ``TIE_TOL`` of zero (round-off on a symmetric training set)
    count as zero.
    """
    w = np.asarray(w, dtype=float)
    means = [np.atleast_1d(predict(m, w)[0]) for m in models]
    signs = np.where(np.stack(means, axis=-1) >= -TIE_TOL, 1, -1)
    return signs[0] if w.ndim == 1 else signs
