"""Fixture builders shared by the model and acceptance tests."""
import numpy as np

from conftest import dense_gp, ref_combined
from twingp.dataset import Dataset
from twingp.gp_core import FitSettings
from twingp.model import TwinGPConfig

# the fixtures exercise the prediction path; a lighter mixture search keeps them fast
FAST = dict(mixture_grid=(6, 4), mixture_max_evals=30)
FAST_FIT = FitSettings(max_evals=80, n_starts=2)


def smooth_data(n, d, seed, noise=0.0):
    r = np.random.default_rng(seed)
    X = r.random((n, d))
    y = np.sin(2 * np.pi * X[:, 0]) + 0.5 * np.cos(3 * X.sum(1)) + X[:, -1] ** 2
    return Dataset(X, y + noise * r.standard_normal(n))


def fast_config(seed=0, **kw):
    base = dict(seed=seed, fit=FAST_FIT, **FAST)
    base.update(kw)
    return TwinGPConfig(**base)


def dense_reference(model, Xs):
    """Exact GP on each query's (X_g, X_l) with the model's kernel, in scaled units."""
    Xs = np.atleast_2d(Xs)
    nbr = model.neighbors(Xs)
    gp, lp, lam = model.global_params, model.local_params, model.mixture.lam
    out = []
    for i in range(Xs.shape[0]):
        Xm = np.vstack([model.X_g, model.pool_X[nbr[i]]])
        Ym = np.concatenate([model.Y_g, model.pool_Y[nbr[i]]])
        R = ref_combined(Xm, Xm, gp.lengthscales, gp.alpha, lp.radius, lp.q, lam)
        r = ref_combined(Xs[i:i + 1], Xm, gp.lengthscales, gp.alpha, lp.radius, lp.q, lam)
        mean, var, mu, tau2 = dense_gp(R, Ym, r, model.eta)
        out.append((mean[0], var[0], mu, tau2))
    return np.array(out)
