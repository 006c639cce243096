"""Gaussian-process regression with a squared-exponential kernel.

The nonparametric regressor behind additive-noise-model scoring. Inputs and
targets are standardized internally; hyperparameters (signal variance,
length scale, noise variance) are set by maximizing the log marginal
likelihood with L-BFGS-B over log-parameters from several seeded starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import ModelError
from .rng import make_rng

# Jitter escalation used whenever a Cholesky factorization fails, relative
# to the mean diagonal of the kernel matrix.
JITTERS = (0.0, 1e-10, 1e-8, 1e-6)

# Bounds on (log s2, log ell, log n2) for standardized data.
_BOUNDS = ((-12.0, 8.0), (np.log(1e-2), np.log(1e3)), (np.log(1e-8), np.log(1e2)))
_START_SCALE = (1.0, 1.0, 1.5)
# L-BFGS-B tolerances: LML differences below ~1e-6 do not move the
# posterior mean at the precision the residual tests need.
_OPT_OPTIONS = {"maxiter": 50, "ftol": 1e-6, "gtol": 1e-4}


def _chol_with_jitter(k: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor with escalating diagonal jitter."""
    scale = float(np.mean(np.diag(k)))
    n = k.shape[0]
    for j in JITTERS:
        if j:
            kj = k.copy()
            kj.flat[:: n + 1] += j * scale
        else:
            kj = k
        try:
            return linalg.cholesky(kj, lower=True, check_finite=False), j
        except linalg.LinAlgError:
            continue
    raise linalg.LinAlgError("kernel matrix not positive definite after jitter")


def _inv_from_chol(low: np.ndarray) -> np.ndarray:
    # scipy's lower Cholesky factor has an exactly-zero upper triangle and
    # dpotri(lower=1) preserves it, so symmetrization is a transpose-add.
    inv, info = linalg.lapack.dpotri(low, lower=1)
    if info != 0:
        raise linalg.LinAlgError("dpotri failed")
    full = inv + inv.T
    np.fill_diagonal(full, np.diag(inv))
    return full


def _nll_and_grad(theta: np.ndarray, d2: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood and its gradient in log-parameters."""
    s2, ell, n2 = np.exp(theta[0]), np.exp(theta[1]), np.exp(theta[2])
    n = y.shape[0]
    kse = np.exp(d2 * (-0.5 / (ell * ell)))
    kse *= s2
    k = kse.copy()
    k.flat[:: n + 1] += n2
    try:
        low, _ = _chol_with_jitter(k)
        alpha = linalg.cho_solve((low, True), y, check_finite=False)
        kinv = _inv_from_chol(low)
    except linalg.LinAlgError:
        return np.inf, np.zeros(3)
    nll = 0.5 * float(y @ alpha) + float(np.sum(np.log(np.diag(low)))) + 0.5 * n * np.log(2 * np.pi)
    # dNLL/dtheta_i = -0.5 * tr((alpha alpha^T - K^-1) dK/dtheta_i), with
    # trace products taken as flattened dot products to avoid temporaries.
    diff = np.outer(alpha, alpha)
    diff -= kinv
    df = diff.ravel()
    g_s2 = float(df @ kse.ravel())
    kse *= d2  # kse now holds K_se * d2
    g_ell = float(df @ kse.ravel()) / (ell * ell)
    grad = -0.5 * np.array([g_s2, g_ell, n2 * float(np.trace(diff))])
    return nll, grad


@dataclass
class GPModel:
    """A fitted GP: standardization constants, training set, hyperparameters,
    and the cached Cholesky factorization used for prediction."""

    x_mean: float
    x_scale: float
    y_mean: float
    y_scale: float
    xs: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    log_marginal_likelihood: float
    jitter: float
    n_train: int
    opt_path: np.ndarray | None = field(default=None, repr=False)

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.theta[0]))

    @property
    def length_scale(self) -> float:
        return float(np.exp(self.theta[1]))

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.theta[2]))

    def standardize_x(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_scale

    def standardize_y(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_scale

    def predict(self, x: np.ndarray, standardized: bool = False) -> np.ndarray:
        """Posterior mean at new inputs (original target units by default)."""
        xs = self.standardize_x(x)
        d2 = (xs[:, None] - self.xs[None, :]) ** 2
        kstar = self.signal_variance * np.exp(-d2 / (2.0 * self.length_scale**2))
        mean = kstar @ self.alpha
        if standardized:
            return mean
        return self.y_mean + self.y_scale * mean


def gp_fit(
    x: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    n_starts: int = 5,
    max_points: int = 1000,
    maxiter: int = 60,
    track_path: bool = False,
) -> GPModel:
    """Fit a GP to scalar (x, y) by maximizing the log marginal likelihood.

    Windows above ``max_points`` are subsampled deterministically (seeded)
    to bound the cubic factorization cost. Raises ModelError if every
    optimizer start fails.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise ModelError("x and y must have equal length")
    if x.shape[0] < 5:
        raise ModelError("need at least 5 samples")

    x_mean, x_scale = float(np.mean(x)), float(np.std(x))
    y_mean, y_scale = float(np.mean(y)), float(np.std(y))
    if x_scale == 0.0:
        x_scale = 1.0
    if y_scale == 0.0:
        y_scale = 1.0
    xs = (x - x_mean) / x_scale
    ys = (y - y_mean) / y_scale

    rng = make_rng(seed)
    if xs.shape[0] > max_points:
        idx = np.sort(rng.choice(xs.shape[0], size=max_points, replace=False))
        xs, ys = xs[idx], ys[idx]

    d2 = (xs[:, None] - xs[None, :]) ** 2
    # First start: unit signal, median-distance length scale, 10% noise.
    med = np.median(d2[d2 > 0]) if np.any(d2 > 0) else 1.0
    start0 = np.clip(
        np.array([0.0, 0.5 * np.log(med), np.log(0.1)]),
        [b[0] for b in _BOUNDS],
        [b[1] for b in _BOUNDS],
    )
    starts = [start0]
    for _ in range(n_starts - 1):
        starts.append(
            np.clip(
                start0 + rng.normal(size=3) * np.array(_START_SCALE),
                [b[0] for b in _BOUNDS],
                [b[1] for b in _BOUNDS],
            )
        )

    best = None
    best_path: list[float] | None = None
    for theta0 in starts:
        path: list[float] = []
        callback = None
        if track_path:
            path.append(_nll_and_grad(theta0, d2, ys)[0])
            callback = lambda tk: path.append(_nll_and_grad(tk, d2, ys)[0])  # noqa: E731
        try:
            res = optimize.minimize(
                _nll_and_grad,
                theta0,
                args=(d2, ys),
                jac=True,
                method="L-BFGS-B",
                bounds=_BOUNDS,
                options=dict(_OPT_OPTIONS, maxiter=maxiter),
                callback=callback,
            )
        except (linalg.LinAlgError, ValueError):
            continue
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
            best_path = path
    if best is None:
        raise ModelError("GP hyperparameter optimization failed on all starts")

    theta = np.clip(best.x, [b[0] for b in _BOUNDS], [b[1] for b in _BOUNDS])
    s2, ell, n2 = np.exp(theta)
    k = s2 * np.exp(-d2 / (2.0 * ell * ell)) + n2 * np.eye(xs.shape[0])
    low, jit = _chol_with_jitter(k)
    alpha = linalg.cho_solve((low, True), ys)
    lml = -(0.5 * float(ys @ alpha) + float(np.sum(np.log(np.diag(low)))) + 0.5 * xs.shape[0] * np.log(2 * np.pi))
    return GPModel(
        x_mean=x_mean,
        x_scale=x_scale,
        y_mean=y_mean,
        y_scale=y_scale,
        xs=xs,
        theta=theta,
        alpha=alpha,
        log_marginal_likelihood=lml,
        jitter=jit,
        n_train=xs.shape[0],
        opt_path=np.array(best_path) if track_path and best_path else None,
    )


def gp_residuals(model: GPModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Residuals y_i - f(x_i) in standardized target units, at all points
    (including any dropped by the subsampling guard during fitting)."""
    ys = model.standardize_y(y)
    return ys - model.predict(x, standardized=True)
