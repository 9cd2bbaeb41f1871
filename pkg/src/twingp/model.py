"""Global-local GP: twinning-selected global points plus per-query neighbours.

Training selects ``g`` global points by twinning, fits the power exponential
kernel on them, sets the Wendland support to the covering radius of the
global points over the training inputs, and tunes the mixing weight and
local nugget on a twinning-selected validation set. Prediction at ``x*``
conditions on the global points and the ``l`` nearest remaining training
points, inverting the (g + l) system through its Schur complement so each
query costs O(g^2 l).

All internal work happens in scaled units (inputs in [0, 1], standardized
outputs); :func:`predict_batch` reports in the original units.
"""
from __future__ import annotations

import json
import logging
import math
import time
import warnings
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .dataset import DataError, Dataset, ScalerParams, apply_scaler, fit_scaler
from .gp_core import FitSettings, Prediction, clip_variance, fit_global
from .kernels import (
    CombinedKernel,
    GlobalKernelParams,
    LocalKernelParams,
    MixtureParams,
    global_matrix,
    local_matrix,
)
from .linalg import (NotPositiveDefinite, block_quad, block_solve, build_block_system, inverse_root,
                     spd_factorize)
from .spatial import NeighborIndex, covering_radius, twin_sample

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
CHUNK = 128
SUBSTREAMS = ("twinning", "validation", "optimizer", "split", "design", "noise")


class ModelFileError(ValueError):
    """A saved model could not be read back."""


def derive_seed(seed: int, name: str) -> int:
    """Integer seed for the named random substream of a master seed."""
    raw = name.encode()
    # every byte of the name enters the entropy pool, in 32-bit words
    words = np.frombuffer(raw.ljust(-(-len(raw) // 4) * 4, b"\0"), dtype="<u4")
    return int(np.random.SeedSequence([int(seed), len(raw), *map(int, words)]).generate_state(1)[0])


def default_sizes(n: int, d: int) -> tuple[int, int, int]:
    """Default global, local and validation counts for n points in d dimensions."""
    g = min(50 * d, max(math.isqrt(n), 10 * d))
    l = max(25, 3 * d)
    return g, l, 2 * g


def feasible_sizes(n: int, d: int, g: int, l: int, v: int) -> tuple[int, int, int]:
    """Shrink sizes so that training on n points is possible, warning if anything changed."""
    g0, l0, v0 = g, l, v
    g_min = min(max(2, d + 1), n - 2) if n >= 3 else 1
    if g + l > n - 1:
        l = max(1, min(l, (n - 1) // 3))
        g = max(g_min, min(g, n - 1 - l))
    v = min(v, n - g)
    if n - g - 1 < l:
        v = 0
    if (g, l, v) != (g0, l0, v0):
        warnings.warn(f"sizes clamped for n={n}: g={g0}->{g}, l={l0}->{l}, v={v0}->{v}", stacklevel=2)
    return g, l, v


@dataclass(frozen=True)
class TwinGPConfig:
    g: int | None = None
    l: int | None = None
    v: int | None = None
    seed: int = 0
    fit: FitSettings = field(default_factory=FitSettings)
    local_nugget_bounds: tuple[float, float] = (1e-8, 1.0)
    pin_lambda: float | None = None
    pin_local_nugget: float | None = None
    mixture_grid: tuple[int, int] = (21, 13)
    mixture_max_evals: int = 100
    n_jobs: int = 1

    def sizes(self, n: int, d: int) -> tuple[int, int, int]:
        g, l, v = default_sizes(n, d)
        g = g if self.g is None else self.g
        l = l if self.l is None else self.l
        v = 2 * g if self.v is None else self.v
        return g, l, v

    def to_dict(self) -> dict:
        return {
            "g": self.g, "l": self.l, "v": self.v, "seed": self.seed,
            "fit": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.fit.__dict__.items()},
            "local_nugget_bounds": list(self.local_nugget_bounds),
            "pin_lambda": self.pin_lambda, "pin_local_nugget": self.pin_local_nugget,
            "mixture_grid": list(self.mixture_grid), "mixture_max_evals": self.mixture_max_evals,
        }


class _Pieces:
    """Global and local kernel blocks for a batch of queries, before mixing.

    ``XL``/``YL`` are the neighbour coordinates and outputs of shape (t, l, d)
    and (t, l). Mixing with a given lambda is then a pair of axpys.
    """

    def __init__(self, X_g, Y_g, gparams: GlobalKernelParams, lparams: LocalKernelParams,
                 Xq, XL, YL):
        active = gparams.active
        self.Y_g, self.YL = Y_g, YL
        Xq3 = Xq[:, None, :]
        self.G_gl = global_matrix(X_g, XL, gparams)
        self.L_gl = local_matrix(X_g, XL, lparams, active)
        self.G_ll = global_matrix(XL, XL, gparams)
        self.L_ll = local_matrix(XL, XL, lparams, active)
        self.G_qg = global_matrix(Xq3, X_g, gparams)[:, 0, :]
        self.L_qg = local_matrix(Xq3, X_g, lparams, active)[:, 0, :]
        self.G_ql = global_matrix(Xq3, XL, gparams)[:, 0, :]
        self.L_ql = local_matrix(Xq3, XL, lparams, active)[:, 0, :]

    def posterior(self, sigma_inv: np.ndarray, lam: float, eta: float, root=None, mean_only=False):
        """Per-query ``(mean, var, noisy_var, tau2, fallback, clipped)`` in scaled units.

        ``root`` is the inverse Cholesky root of the global block; when given
        it is used for the variance quadratic. ``mean_only`` skips the
        variance entirely and returns just the means.
        """
        a, b = 1.0 - lam, lam
        t, l = self.YL.shape
        g = self.Y_g.size
        R_gl = a * self.G_gl + b * self.L_gl
        R_ll = a * self.G_ll + b * self.L_ll + eta * np.eye(l)
        r = np.concatenate([a * self.G_qg + b * self.L_qg, a * self.G_ql + b * self.L_ql], axis=1)
        Y = np.concatenate([np.broadcast_to(self.Y_g, (t, g)), self.YL], axis=1)
        ones = np.ones_like(Y)
        sys = build_block_system(sigma_inv, R_gl, R_ll, strict=False, sigma_root=root)
        rhs = [Y, ones] if mean_only or root is not None else [Y, ones, r]
        sol = block_solve(sys, np.stack(rhs, axis=-1))
        mean, tau2 = _gp_terms(Y, r, sol)
        if root is not None:
            quad = block_quad(sys, r)
        elif not mean_only:
            quad = np.sum(r * sol[..., 2], axis=1)

        fallback = ~sys.ok
        if fallback.any():
            rg, Yg = r[fallback, :g], Y[fallback, :g]
            sol_g = np.einsum("ij,tjk->tik", sigma_inv, np.stack([Yg, ones[fallback, :g]], axis=-1))
            mean[fallback], tau2[fallback] = _gp_terms(Yg, rg, sol_g)
            if not mean_only:
                quad[fallback] = (np.sum((rg @ root.T) ** 2, axis=1) if root is not None
                                  else np.einsum("ti,ij,tj->t", rg, sigma_inv, rg))
        if mean_only:
            return mean
        var, clipped = clip_variance(tau2 * (1.0 - quad), tau2)
        return mean, var, var + tau2 * eta, tau2, fallback, clipped


def _gp_terms(Y, r, sol):
    """Mean and profiled tau2 from ``K^{-1} [Y, 1]``."""
    KY, K1 = sol[..., 0], sol[..., 1]
    mu = KY.sum(axis=1) / K1.sum(axis=1)
    weights = KY - mu[:, None] * K1
    tau2 = np.maximum(0.0, np.sum((Y - mu[:, None]) * weights, axis=1) / Y.shape[1])
    mean = mu + np.sum(r * weights, axis=1)
    return mean, tau2


def _global_inverse(G_gg, L_gg, lam, eta):
    """Inverse of the mixed global block, its inverse root, and the jitter used."""
    sigma = (1.0 - lam) * G_gg + lam * L_gg + eta * np.eye(G_gg.shape[0])
    f = spd_factorize(0.5 * (sigma + sigma.T))
    root = inverse_root(f)
    inv = root.T @ root
    return 0.5 * (inv + inv.T), root, f.jitter


@dataclass(eq=False)
class TwinGPModel:
    scaler: ScalerParams
    X_g: np.ndarray
    Y_g: np.ndarray
    pool_X: np.ndarray
    pool_Y: np.ndarray
    global_indices: np.ndarray
    pool_indices: np.ndarray
    validation_indices: np.ndarray
    global_params: GlobalKernelParams
    local_params: LocalKernelParams
    mixture: MixtureParams
    mu_g: float
    tau2_g: float
    l: int
    sigma_gg_inv: np.ndarray = field(repr=False)
    sigma_gg_root: np.ndarray = field(repr=False)
    sigma_jitter: float = 0.0
    report: dict = field(default_factory=dict, repr=False)
    pool_index: NeighborIndex = field(init=False, repr=False)

    def __post_init__(self):
        self.pool_index = NeighborIndex(self.pool_X)
        G_gg = global_matrix(self.X_g, self.X_g, self.global_params)
        L_gg = local_matrix(self.X_g, self.X_g, self.local_params, self.global_params.active)
        self._gg = (G_gg, L_gg)

    @property
    def d(self) -> int:
        return self.X_g.shape[1]

    @property
    def g(self) -> int:
        return self.X_g.shape[0]

    @property
    def eta(self) -> float:
        return self.mixture.nugget(self.global_params.nugget)

    @property
    def kernel(self) -> CombinedKernel:
        return CombinedKernel(self.global_params, self.local_params, self.mixture.lam)

    def neighbors(self, Xs) -> np.ndarray:
        """Pool positions of the l nearest neighbours of each scaled query."""
        return self.pool_index.k_nearest_batch(Xs, self.l)

    def pieces(self, Xs, nbr=None) -> _Pieces:
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        nbr = self.neighbors(Xs) if nbr is None else nbr
        return _Pieces(self.X_g, self.Y_g, self.global_params, self.local_params,
                       Xs, self.pool_X[nbr], self.pool_Y[nbr])

    def predict_scaled(self, Xs, sigma_inv=None):
        """Posterior in scaled units: ``(mean, var, noisy_var, tau2, fallback, clipped)``."""
        if sigma_inv is None:
            sigma_inv, root = self.sigma_gg_inv, self.sigma_gg_root
        else:
            root = None
        return self.pieces(Xs).posterior(sigma_inv, self.mixture.lam, self.eta, root)

    def fit_report(self) -> dict:
        gp = self.global_params
        return {
            "n": int(self.global_indices.size + self.pool_indices.size),
            "d": self.d,
            "g": self.g,
            "l": self.l,
            "v": int(self.validation_indices.size),
            "theta_g": gp.lengthscales.tolist(),
            "alpha": gp.alpha,
            "eta_g": gp.nugget,
            "mu_g": self.mu_g,
            "tau2_g": self.tau2_g,
            "theta_l": self.local_params.radius,
            "q": self.local_params.q,
            "lambda": self.mixture.lam,
            "eta_l": self.mixture.local_nugget,
            "eta": self.eta,
            "sigma_gg_jitter": self.sigma_jitter,
            **{k: v for k, v in self.report.items() if k != "timings"},
        }


def _validation_pieces(X_g, Y_g, gparams, lparams, pool_X, pool_Y, pool_index, vidx, l):
    Xv = pool_X[vidx]
    nbr = pool_index.k_nearest_batch(Xv, l, exclude=vidx)
    return _Pieces(X_g, Y_g, gparams, lparams, Xv, pool_X[nbr], pool_Y[nbr]), pool_Y[vidx]


def fit_mixture(pieces: _Pieces, Y_v, G_gg, L_gg, eta_g: float, cfg: TwinGPConfig) -> tuple[MixtureParams, dict]:
    """Choose lambda and the local nugget by validation squared error.

    Grid scan over lambda x log(eta_l), then bounded Nelder-Mead from the
    best cell. Returns the parameters and a small search summary.
    """
    lo, hi = cfg.local_nugget_bounds
    if Y_v.size == 0:
        warnings.warn("no validation points; using lambda=0.5 and eta_l=eta_g", stacklevel=2)
        return MixtureParams(0.5 if cfg.pin_lambda is None else cfg.pin_lambda,
                             eta_g if cfg.pin_local_nugget is None else cfg.pin_local_nugget), {"evals": 0}

    evals = {"n": 0}

    def sse(lam, eta_l):
        evals["n"] += 1
        eta = (1.0 - lam) * eta_g + lam * eta_l
        try:
            sigma_inv, root, _ = _global_inverse(G_gg, L_gg, lam, eta)
            mean = pieces.posterior(sigma_inv, lam, eta, root, mean_only=True)
        except (NotPositiveDefinite, np.linalg.LinAlgError, FloatingPointError):
            return np.inf
        val = float(np.sum((Y_v - mean) ** 2))
        return val if np.isfinite(val) else np.inf

    n_lam, n_eta = cfg.mixture_grid
    lams = [cfg.pin_lambda] if cfg.pin_lambda is not None else list(np.linspace(0.0, 1.0, n_lam))
    etas = [cfg.pin_local_nugget] if cfg.pin_local_nugget is not None else list(
        np.clip(np.exp(np.linspace(np.log(lo), np.log(hi), n_eta)), lo, hi))
    best = (np.inf, 0.5, eta_g)
    grid_min = np.inf
    for lam in lams:
        for eta_l in etas:
            if lam == 0.0 and eta_l != etas[0]:
                continue  # eta_l has no effect at lambda = 0
            val = sse(lam, eta_l)
            grid_min = min(grid_min, val)
            if val < best[0]:
                best = (val, lam, eta_l)
    if not np.isfinite(best[0]):
        raise NotPositiveDefinite("mixture search failed at every grid point")

    free = [cfg.pin_lambda is None, cfg.pin_local_nugget is None]
    if any(free) and cfg.mixture_max_evals > 0:
        z0, bounds, steps = [], [], []
        if free[0]:
            z0.append(best[1]); bounds.append((0.0, 1.0)); steps.append(0.05)
        if free[1]:
            z0.append(np.log(best[2])); bounds.append((np.log(lo), np.log(hi))); steps.append(0.5)
        z0 = np.array(z0)

        def unpack(z):
            k = 0
            lam = best[1] if not free[0] else float(np.clip(z[k], 0.0, 1.0))
            k += free[0]
            eta_l = best[2] if not free[1] else float(np.clip(np.exp(z[k]), lo, hi))
            return lam, eta_l

        simplex = [z0]
        for i, st in enumerate(steps):
            z = z0.copy()
            z[i] = z0[i] + st if z0[i] + st <= bounds[i][1] else z0[i] - st
            simplex.append(z)
        res = minimize(lambda z: sse(*unpack(z)), z0, method="Nelder-Mead", bounds=bounds,
                       options={"maxfev": cfg.mixture_max_evals, "fatol": 1e-10, "xatol": 1e-6,
                                "initial_simplex": np.array(simplex)})
        if res.fun < best[0]:
            lam, eta_l = unpack(res.x)
            best = (float(res.fun), lam, eta_l)
    summary = {"evals": evals["n"], "validation_sse": best[0], "grid_min_sse": grid_min}
    return MixtureParams(float(best[1]), float(best[2])), summary


def train(data: Dataset, cfg: TwinGPConfig | None = None) -> TwinGPModel:
    """Fit a global-local GP to ``data`` (original units)."""
    cfg = cfg or TwinGPConfig()
    t0 = time.perf_counter()
    n, d = data.n, data.d
    g, l, v = cfg.sizes(n, d)
    if g < 1 or l < 1 or v < 0:
        raise ValueError(f"invalid sizes g={g}, l={l}, v={v}")
    if g + l > n:
        raise DataError(f"need at least g + l = {g + l} training points, got {n}")
    if g < 2:
        raise DataError("need at least two global points to fit the global kernel")

    scaler = fit_scaler(data)
    scaled = apply_scaler(data, scaler)
    X, Y = scaled.inputs, scaled.outputs
    active = ~scaler.constant_columns

    gidx = np.sort(twin_sample(scaled, g, derive_seed(cfg.seed, "twinning")))
    pool_mask = np.ones(n, dtype=bool)
    pool_mask[gidx] = False
    pidx = np.flatnonzero(pool_mask)
    v = min(v, pidx.size)
    if pidx.size - 1 < l:
        v = 0
    vpos = np.sort(twin_sample(scaled.subset(pidx), v, derive_seed(cfg.seed, "validation"))) if v else np.array([], dtype=int)
    t_select = time.perf_counter()

    X_g, Y_g = X[gidx], Y[gidx]
    gfit = fit_global(X_g, Y_g, cfg.fit, derive_seed(cfg.seed, "optimizer"), active)
    gparams = gfit.params
    t_global = time.perf_counter()

    radius = covering_radius(X[:, active] if active.any() else np.zeros((n, 1)),
                             X_g[:, active] if active.any() else np.zeros((g, 1)))
    if radius <= 0:
        radius = 1e-12
    lparams = LocalKernelParams.for_dimension(radius, d)
    t_radius = time.perf_counter()

    pool_X, pool_Y = X[pidx], Y[pidx]
    pool_index = NeighborIndex(pool_X)
    G_gg = global_matrix(X_g, X_g, gparams)
    L_gg = local_matrix(X_g, X_g, lparams, active)
    if v:
        pieces, Y_v = _validation_pieces(X_g, Y_g, gparams, lparams, pool_X, pool_Y, pool_index, vpos, l)
    else:
        pieces, Y_v = None, np.array([])
    mixture, search = fit_mixture(pieces, Y_v, G_gg, L_gg, gparams.nugget, cfg)
    t_mix = time.perf_counter()

    eta = mixture.nugget(gparams.nugget)
    sigma_inv, root, jitter = _global_inverse(G_gg, L_gg, mixture.lam, eta)
    t1 = time.perf_counter()
    report = {
        "seed": cfg.seed,
        "substream_seeds": {name: derive_seed(cfg.seed, name) for name in SUBSTREAMS},
        "global_fit_objective": gfit.objective,
        "global_fit_evals": gfit.n_evals,
        "mixture_search": search,
        "jitter_events": int(jitter > 0),
        "config": cfg.to_dict(),
        "timings": {
            "select_s": t_select - t0, "global_fit_s": t_global - t_select,
            "radius_s": t_radius - t_global, "mixture_s": t_mix - t_radius,
            "total_s": t1 - t0,
        },
    }
    return TwinGPModel(scaler, X_g, Y_g, pool_X, pool_Y, gidx, pidx, pidx[vpos], gparams,
                       lparams, mixture, gfit.hyper.mu, gfit.hyper.tau2, l, sigma_inv, root, jitter, report)


def predict_batch(model: TwinGPModel, X, n_jobs: int | None = None) -> Prediction:
    """Predict at each row of ``X`` (original units).

    Queries are processed in fixed-size chunks, optionally on a thread pool;
    results do not depend on the number of workers.
    """
    start = time.perf_counter()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.d:
        raise DataError(f"queries have {X.shape[1]} columns, model expects {model.d}")
    Xs = model.scaler.scale_inputs(X) if X.shape[0] else X
    t = Xs.shape[0]
    chunks = [Xs[i:i + CHUNK] for i in range(0, t, CHUNK)]
    workers = n_jobs or 1
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(model.predict_scaled, chunks))
    else:
        parts = [model.predict_scaled(c) for c in chunks]
    if parts:
        cols = list(zip(*parts))
        mean, var, noisy = (np.concatenate(c) for c in cols[:3])
        fallback, clipped = np.concatenate(cols[4]), sum(cols[5])
    else:
        mean = var = noisy = np.empty(0)
        fallback, clipped = np.empty(0, dtype=bool), 0
    if fallback.any():
        logger.warning("%d queries fell back to the global-only predictor", int(fallback.sum()))
    sd = model.scaler.output_sd
    pred = Prediction(model.scaler.unscale_outputs(mean), var * sd**2, noisy * sd**2,
                      fallback, int(clipped), time.perf_counter() - start)
    return pred


def predict(model: TwinGPModel, x) -> Prediction:
    """Single-query prediction; identical to the matching row of :func:`predict_batch`."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return predict_batch(model, x)[0]


_ARRAYS = ("X_g", "Y_g", "pool_X", "pool_Y", "global_indices", "pool_indices",
           "validation_indices", "sigma_gg_inv", "sigma_gg_root", "lengthscales", "active",
           "input_min", "input_max")


def save_model(model: TwinGPModel, path) -> None:
    gp = model.global_params
    meta = {
        "format_version": FORMAT_VERSION,
        "alpha": gp.alpha, "eta_g": gp.nugget,
        "theta_l": model.local_params.radius, "q": model.local_params.q,
        "lambda": model.mixture.lam, "eta_l": model.mixture.local_nugget,
        "mu_g": model.mu_g, "tau2_g": model.tau2_g, "l": model.l,
        "output_mean": model.scaler.output_mean, "output_sd": model.scaler.output_sd,
        "sigma_jitter": model.sigma_jitter, "report": model.report,
    }
    arrays = {
        "X_g": model.X_g, "Y_g": model.Y_g, "pool_X": model.pool_X, "pool_Y": model.pool_Y,
        "global_indices": model.global_indices, "pool_indices": model.pool_indices,
        "validation_indices": model.validation_indices, "sigma_gg_inv": model.sigma_gg_inv,
        "sigma_gg_root": model.sigma_gg_root,
        "lengthscales": gp.lengthscales,
        "active": np.ones(model.d, dtype=bool) if gp.active is None else gp.active,
        "input_min": model.scaler.input_min, "input_max": model.scaler.input_max,
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path) -> TwinGPModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such model file: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            arrays = {k: z[k] for k in _ARRAYS}
    except (zipfile.BadZipFile, KeyError, ValueError, OSError, EOFError) as exc:
        raise ModelFileError(f"{path}: corrupt or unreadable model file ({exc})") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: model format version {version}, expected {FORMAT_VERSION}")
    try:
        scaler = ScalerParams(arrays["input_min"], arrays["input_max"],
                              meta["output_mean"], meta["output_sd"])
        gp = GlobalKernelParams(arrays["lengthscales"], meta["alpha"], meta["eta_g"], arrays["active"])
        return TwinGPModel(
            scaler, arrays["X_g"], arrays["Y_g"], arrays["pool_X"], arrays["pool_Y"],
            arrays["global_indices"], arrays["pool_indices"], arrays["validation_indices"],
            gp, LocalKernelParams(meta["theta_l"], meta["q"]),
            MixtureParams(meta["lambda"], meta["eta_l"]), meta["mu_g"], meta["tau2_g"],
            meta["l"], arrays["sigma_gg_inv"], arrays["sigma_gg_root"], meta["sigma_jitter"], meta["report"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: inconsistent model contents ({exc})") from exc


def with_mixture(model: TwinGPModel, mixture: MixtureParams) -> TwinGPModel:
    """Copy of ``model`` with different mixing parameters (global inverse recomputed)."""
    G_gg, L_gg = model._gg
    sigma_inv, root, jitter = _global_inverse(G_gg, L_gg, mixture.lam, mixture.nugget(model.global_params.nugget))
    return replace(model, mixture=mixture, sigma_gg_inv=sigma_inv, sigma_gg_root=root, sigma_jitter=jitter)
