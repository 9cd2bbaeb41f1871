"""Exact Gaussian process: profile likelihood, hyperparameter search, prediction.

The process is ``f ~ GP(mu, tau2 * R)`` with nugget ``eta = nu2 / tau2``.
``mu`` and ``tau2`` are profiled out in closed form, so the search only runs
over the correlation parameters and the nugget. This is the O(n^3) path; the
global-local model reuses its pieces on small blocks and the full model
serves as a reference on small data.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .kernels import GlobalKernelParams, kernel_matrix
from .linalg import NotPositiveDefinite, SPDFactor, log_det, solve, spd_factorize

logger = logging.getLogger(__name__)

# roundoff band in which a negative posterior variance is silently set to 0
VARIANCE_CLIP = 1e-8


class NumericalError(RuntimeError):
    """An internal consistency check on a numerical result failed."""


@dataclass(frozen=True)
class GPHyperParams:
    mu: float
    tau2: float
    eta: float

    def __post_init__(self):
        if self.tau2 < 0:
            raise ValueError("tau2 must be nonnegative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")


@dataclass
class Prediction:
    """Posterior mean, latent variance and noisy-observation variance.

    Fields are arrays of shape (t,) for batches or floats for a single query.
    ``fallback`` flags queries answered by the global-only predictor.
    """

    mean: np.ndarray
    var: np.ndarray
    noisy_var: np.ndarray
    fallback: np.ndarray | None = None
    clipped: int = 0
    elapsed_s: float | None = None

    def __len__(self) -> int:
        return np.size(self.mean)

    def __getitem__(self, i) -> "Prediction":
        fb = None if self.fallback is None else bool(self.fallback[i])
        return Prediction(float(self.mean[i]), float(self.var[i]), float(self.noisy_var[i]), fb)

    @property
    def per_query_s(self) -> float | None:
        if self.elapsed_s is None or len(self) == 0:
            return None
        return self.elapsed_s / len(self)

    @property
    def sd(self):
        return np.sqrt(self.var)

    @property
    def noisy_sd(self):
        return np.sqrt(self.noisy_var)


def clip_variance(var, tau2=1.0):
    """Clip roundoff-negative variances to 0; returns ``(var, n_clipped)``.

    The band is relative to the process variance ``tau2``.
    """
    var = np.asarray(var, dtype=float)
    band = VARIANCE_CLIP * np.maximum(tau2, 1e-300)
    if np.any(var < -band):
        raise NumericalError(f"posterior variance {float(np.min(var)):.3e} is negative beyond roundoff")
    neg = var < 0
    return np.where(neg, 0.0, var), int(np.count_nonzero(neg))


def profile_mu(factor: SPDFactor, Y) -> float:
    Y = np.asarray(Y, dtype=float)
    ones = np.ones_like(Y)
    sol = solve(factor, np.column_stack([Y, ones]))
    return float(ones @ sol[:, 0] / (ones @ sol[:, 1]))


def profile_tau2(factor: SPDFactor, Y, mu: float) -> float:
    resid = np.asarray(Y, dtype=float) - mu
    return max(0.0, float(resid @ solve(factor, resid)) / resid.size)


def _profile(factor: SPDFactor, Y):
    ones = np.ones_like(Y)
    sol = solve(factor, np.column_stack([Y, ones]))
    mu = float(ones @ sol[:, 0] / (ones @ sol[:, 1]))
    alpha = sol[:, 0] - mu * sol[:, 1]
    tau2 = max(0.0, float((Y - mu) @ alpha) / Y.size)
    return mu, tau2, alpha


def neg_log_likelihood(X, Y, kernel, eta: float) -> float:
    """Profile objective ``n log tau2_hat + log |R + eta I|``.

    Returns ``inf`` when the correlation matrix cannot be factored, so a
    search can move on.
    """
    Y = np.asarray(Y, dtype=float)
    R = kernel_matrix(X, X, kernel)
    try:
        f = spd_factorize(R + eta * np.eye(Y.size))
    except NotPositiveDefinite:
        return np.inf
    _, tau2, _ = _profile(f, Y)
    if tau2 <= 0:
        return -np.inf
    return Y.size * np.log(tau2) + log_det(f)


@dataclass(frozen=True)
class FitSettings:
    """Search box and budget for the global-kernel fit."""

    lengthscale_bounds: tuple[float, float] = (1e-3, 1e3)
    nugget_bounds: tuple[float, float] = (1e-8, 1.0)
    pin_nugget: float | None = None
    grid_lengthscales: tuple[float, ...] = (1e-3, 1.778e-2, 0.3162, 5.623, 100.0)
    grid_alpha: tuple[float, ...] = (1.0, 1.5, 2.0)
    grid_nugget: tuple[float, ...] = (1e-6, 1e-3)
    n_starts: int = 3
    max_evals: int = 200
    ftol: float = 1e-6
    shared_scale_above: int = 3


@dataclass(frozen=True)
class GlobalFit:
    params: GlobalKernelParams
    hyper: GPHyperParams
    objective: float
    n_evals: int
    grid_objectives: np.ndarray = field(repr=False, compare=False)


class _Objective:
    def __init__(self, X, Y, active, settings: FitSettings):
        self.X, self.Y, self.active, self.s = X, Y, active, settings
        self.n_active = int(active.sum())
        self.d = active.size
        self.calls = 0

    def unpack(self, z):
        theta = np.ones(self.d)
        # exp(log(bound)) can land a rounding step outside the box
        theta[self.active] = np.clip(np.exp(z[: self.n_active]), *self.s.lengthscale_bounds)
        alpha = float(z[self.n_active])
        eta = self.s.pin_nugget if self.s.pin_nugget is not None else float(
            np.clip(np.exp(z[self.n_active + 1]), *self.s.nugget_bounds))
        return theta, alpha, eta

    def __call__(self, z) -> float:
        self.calls += 1
        theta, alpha, eta = self.unpack(z)
        p = GlobalKernelParams(theta, min(2.0, max(1.0, alpha)), eta, self.active)
        val = neg_log_likelihood(self.X, self.Y, p, eta)
        return float(val)


def _grid(obj: _Objective, s: FitSettings):
    logs = np.log(s.grid_lengthscales)
    nugs = [s.pin_nugget] if s.pin_nugget is not None else [
        min(max(v, s.nugget_bounds[0]), s.nugget_bounds[1]) for v in s.grid_nugget]
    if obj.n_active <= s.shared_scale_above:
        scales = [np.array(c) for c in itertools.product(logs, repeat=obj.n_active)]
    else:
        scales = [np.full(obj.n_active, v) for v in logs]
    points = []
    for sc, a, e in itertools.product(scales, s.grid_alpha, nugs):
        z = list(sc) + [a]
        if s.pin_nugget is None:
            z.append(np.log(e))
        points.append(np.array(z))
    return points


def _simplex(z0, lo, hi):
    simplex = [z0]
    for i in range(z0.size):
        z = z0.copy()
        step = 0.25 if (hi[i] - lo[i]) <= 1.0 else 0.7
        z[i] = z0[i] + step if z0[i] + step <= hi[i] else z0[i] - step
        simplex.append(z)
    return np.array(simplex)


def fit_global(X, Y, settings: FitSettings | None = None, seed: int = 0, active=None) -> GlobalFit:
    """Fit power-exponential lengthscales, alpha and nugget by profile likelihood.

    Grid initialization followed by bounded Nelder-Mead from the best grid
    points. The best objective seen anywhere (grid included) wins; ties go to
    the earlier start. ``seed`` is accepted for interface symmetry: the
    search itself is deterministic.
    """
    s = settings or FitSettings()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = np.asarray(Y, dtype=float)
    n, d = X.shape
    active = np.ones(d, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    if n < 2:
        raise ValueError("need at least two points to fit kernel parameters")

    if np.ptp(Y) == 0.0:
        eta = s.pin_nugget if s.pin_nugget is not None else s.nugget_bounds[1]
        p = GlobalKernelParams(np.ones(d), 2.0, eta, active)
        return GlobalFit(p, GPHyperParams(float(Y[0]), 0.0, eta), -np.inf, 0, np.array([]))

    obj = _Objective(X, Y, active, s)
    na = obj.n_active
    lo = [np.log(s.lengthscale_bounds[0])] * na + [1.0]
    hi = [np.log(s.lengthscale_bounds[1])] * na + [2.0]
    if s.pin_nugget is None:
        lo.append(np.log(s.nugget_bounds[0]))
        hi.append(np.log(s.nugget_bounds[1]))
    lo, hi = np.array(lo), np.array(hi)

    grid = _grid(obj, s)
    grid_vals = np.array([obj(z) for z in grid])
    if not np.any(np.isfinite(grid_vals)):
        raise NotPositiveDefinite("every grid point failed to factorize; data are degenerate")
    order = np.argsort(grid_vals, kind="stable")
    best_z, best_val = grid[order[0]], grid_vals[order[0]]

    for start in order[: s.n_starts]:
        if not np.isfinite(grid_vals[start]):
            continue
        z0 = np.clip(grid[start], lo, hi)
        res = minimize(obj, z0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"maxfev": s.max_evals, "fatol": s.ftol, "xatol": 1e-8,
                                "initial_simplex": _simplex(z0, lo, hi)})
        if res.fun < best_val:
            best_z, best_val = np.clip(res.x, lo, hi), float(res.fun)

    theta, alpha, eta = obj.unpack(best_z)
    params = GlobalKernelParams(theta, float(np.clip(alpha, 1.0, 2.0)), eta, active)
    R = kernel_matrix(X, X, params)
    f = spd_factorize(R + eta * np.eye(n))
    mu, tau2, _ = _profile(f, Y)
    logger.debug("global fit: theta=%s alpha=%.3f eta=%.3g obj=%.6g (%d evals)",
                 theta, alpha, eta, best_val, obj.calls)
    return GlobalFit(params, GPHyperParams(mu, tau2, eta), float(best_val), obj.calls, grid_vals)


@dataclass(frozen=True)
class GPModel:
    X: np.ndarray
    Y: np.ndarray
    kernel: object
    hyper: GPHyperParams
    factor: SPDFactor = field(repr=False)
    weights: np.ndarray = field(repr=False)  # [R + eta I]^{-1} (Y - mu 1)


def build_gp(X, Y, kernel, eta: float, hyper: GPHyperParams | None = None) -> GPModel:
    """Exact GP on (X, Y) with a fixed kernel; mu and tau2 profiled unless given."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = np.asarray(Y, dtype=float)
    f = spd_factorize(kernel_matrix(X, X, kernel) + eta * np.eye(Y.size))
    if hyper is None:
        mu, tau2, w = _profile(f, Y)
        hyper = GPHyperParams(mu, tau2, eta)
    else:
        w = solve(f, Y - hyper.mu)
    return GPModel(X, Y, kernel, hyper, f, w)


def fit_full_gp(X, Y, seed: int = 0, settings: FitSettings | None = None,
                cap: int = 2000, active=None) -> GPModel:
    """Exact GP with the power exponential kernel fitted on all points."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = np.asarray(Y, dtype=float)
    n = Y.size
    if n > cap:
        raise ValueError(f"full GP is capped at {cap} points, got {n}")
    if n == 1:
        s = settings or FitSettings()
        eta = s.pin_nugget if s.pin_nugget is not None else 1e-6
        p = GlobalKernelParams(np.full(X.shape[1], 0.1), 2.0, eta, active)
        hyper = GPHyperParams(float(Y[0]), max(float(Y[0]) ** 2, 1.0), eta)
        return build_gp(X, Y, p, eta, hyper)
    fit = fit_global(X, Y, settings, seed, active)
    return build_gp(X, Y, fit.params, fit.params.nugget, fit.hyper)


def predict_full(model: GPModel, Xstar) -> Prediction:
    """Posterior at one query (d-vector) or a batch (t x d)."""
    Xs = np.asarray(Xstar, dtype=float)
    single = Xs.ndim == 1
    Xs = np.atleast_2d(Xs)
    if Xs.shape[1] != model.X.shape[1]:
        raise ValueError(f"query dimension {Xs.shape[1]} does not match model dimension {model.X.shape[1]}")
    h = model.hyper
    r = kernel_matrix(Xs, model.X, model.kernel)
    mean = h.mu + r @ model.weights
    quad = np.sum(r * solve(model.factor, r.T).T, axis=1)
    var, clipped = clip_variance(h.tau2 * (1.0 - quad), h.tau2)
    noisy = var + h.tau2 * h.eta
    pred = Prediction(mean, var, noisy, np.zeros(mean.size, dtype=bool), clipped)
    return pred[0] if single else pred
