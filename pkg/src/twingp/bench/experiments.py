"""Repeated train/test experiments on emulators and on tabular data."""
from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import Dataset, apply_scaler, fit_scaler, load_csv, random_split
from ..gp_core import FitSettings, fit_full_gp, predict_full
from ..model import TwinGPConfig, derive_seed, feasible_sizes, predict_batch, train
from .functions import FUNCTIONS
from .metrics import nlpd, rmse
from .sobol import sobol_points

logger = logging.getLogger(__name__)

PRESETS = {
    "full": {"n": 10000, "t": 2000, "iterations": 50},
    "desk": {"n": 2000, "t": 500, "iterations": 5},
}
# the one-dimensional illustration is small at any scale
GRAMACY_PRESET = {"n": 500, "t": 2000, "noise_sd": 0.1, "grid": True, "g": 22, "l": 25}


@dataclass
class ExperimentReport:
    config: dict
    seeds: list[int] = field(default_factory=list)
    rmse: list[float] = field(default_factory=list)
    nlpd: list[float] = field(default_factory=list)
    train_s: list[float] = field(default_factory=list)
    predict_s: list[float] = field(default_factory=list)
    baseline_rmse: list[float] = field(default_factory=list)
    oracle_rmse: list[float] = field(default_factory=list)
    fallbacks: list[int] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.rmse)

    def summary(self) -> dict:
        out = {
            "iterations": self.iterations,
            "median_rmse": float(np.median(self.rmse)),
            "median_nlpd": float(np.median(self.nlpd)),
            "mean_train_s": float(np.mean(self.train_s)),
            "mean_predict_s": float(np.mean(self.predict_s)),
        }
        if self.baseline_rmse:
            out["median_baseline_rmse"] = float(np.median(self.baseline_rmse))
        if self.oracle_rmse:
            out["median_oracle_rmse"] = float(np.median(self.oracle_rmse))
        return out

    def to_dict(self, timings: bool = True) -> dict:
        d = asdict(self)
        if not timings:
            d.pop("train_s")
            d.pop("predict_s")
        return d

    def write_json(self, path, timings: bool = True) -> None:
        Path(path).write_text(json.dumps(self.to_dict(timings), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path, timings: bool = True) -> None:
        cols = ["seed", "rmse", "nlpd"] + (["train_s", "predict_s"] if timings else [])
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i in range(self.iterations):
                row = [self.seeds[i], repr(self.rmse[i]), repr(self.nlpd[i])]
                if timings:
                    row += [repr(self.train_s[i]), repr(self.predict_s[i])]
                w.writerow(row)

    def write_timings_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "train_s", "predict_s"])
            for s, a, b in zip(self.seeds, self.train_s, self.predict_s):
                w.writerow([s, repr(a), repr(b)])


def _oracle_rmse(train_data: Dataset, X_test, truth, seed: int, cap: int, settings: FitSettings):
    if train_data.n > cap:
        return None
    sc = fit_scaler(train_data)
    scaled = apply_scaler(train_data, sc)
    full = fit_full_gp(scaled.inputs, scaled.outputs, seed, settings, cap, ~sc.constant_columns)
    mean = sc.unscale_outputs(predict_full(full, sc.scale_inputs(X_test)).mean)
    return rmse(mean, truth)


def _fit_and_score(train_data, X_test, truth, y_test, cfg, noisy_nlpd, report, seed,
                   oracle, oracle_cap, n_jobs):
    t0 = time.perf_counter()
    model = train(train_data, cfg)
    t1 = time.perf_counter()
    pred = predict_batch(model, X_test, n_jobs)
    t2 = time.perf_counter()
    var = pred.noisy_var if noisy_nlpd else pred.var
    report.seeds.append(seed)
    report.rmse.append(rmse(pred.mean, truth))
    report.nlpd.append(nlpd(pred.mean, np.maximum(var, 1e-300), y_test))
    report.train_s.append(t1 - t0)
    report.predict_s.append(t2 - t1)
    report.baseline_rmse.append(rmse(np.full(truth.shape, train_data.outputs.mean()), truth))
    report.fallbacks.append(int(pred.fallback.sum()))
    if oracle:
        val = _oracle_rmse(train_data, X_test, truth, derive_seed(seed, "optimizer"), oracle_cap, cfg.fit)
        if val is not None:
            report.oracle_rmse.append(val)


def run_emulation(function: str, n: int, t: int, iterations: int = 5, noise_sd: float = 0.0,
                  seed: int = 0, g: int | None = None, l: int | None = None, v: int | None = None,
                  grid: bool = False, oracle: bool = False, oracle_cap: int = 2000,
                  eta_floor: float | None = None, n_jobs: int = 1) -> ExperimentReport:
    """Emulation protocol: uniform training designs, a fixed test design, repeated fits.

    Training inputs are uniform on the unit cube (or an even grid when
    ``grid``), redrawn each iteration. The test design is the first ``t``
    Sobol points (or an even grid), fixed across iterations. RMSE is taken
    against the noise-free function; NLPD uses the noisy predictive variance
    when ``noise_sd > 0`` and the latent variance otherwise.
    """
    if function not in FUNCTIONS:
        raise KeyError(f"unknown function {function!r}; choose from {sorted(FUNCTIONS)}")
    if n < 1 or t < 1 or iterations < 1:
        raise ValueError("n, t and iterations must be positive")
    f, d = FUNCTIONS[function]
    noisy = noise_sd > 0
    if eta_floor is None:
        eta_floor = 1e-8 if noisy else 1e-7
    settings = FitSettings(nugget_bounds=(eta_floor, 1.0))
    X_test = np.linspace(0, 1, t)[:, None] if grid and d == 1 else sobol_points(t, d)
    truth = f(X_test)
    config = {
        "protocol": "emulation", "function": function, "n": n, "t": t,
        "iterations": iterations, "noise_sd": noise_sd, "seed": seed, "g": g, "l": l, "v": v,
        "grid": grid, "oracle": oracle, "eta_floor": eta_floor,
        "nlpd_variance": "noisy" if noisy else "latent",
    }
    report = ExperimentReport(config)
    for it in range(iterations):
        it_seed = derive_seed(seed, f"iteration-{it}")
        rng = np.random.default_rng(derive_seed(it_seed, "design"))
        X = np.linspace(0, 1, n)[:, None] if grid and d == 1 else rng.random((n, d))
        y = f(X)
        y_test = truth
        if noisy:
            noise_rng = np.random.default_rng(derive_seed(it_seed, "noise"))
            y = y + noise_sd * noise_rng.standard_normal(n)
            y_test = truth + noise_sd * noise_rng.standard_normal(t)
        cfg = TwinGPConfig(g=g, l=l, v=v, seed=it_seed, fit=settings)
        _fit_and_score(Dataset(X, y), X_test, truth, y_test, cfg, noisy, report, it_seed,
                       oracle, oracle_cap, n_jobs)
        logger.info("%s iteration %d: rmse=%.4g", function, it, report.rmse[-1])
    return report


def run_realdata(csv_path, target, test_fraction: float = 0.1, iterations: int = 5, seed: int = 0,
                 g: int | None = None, l: int | None = None, v: int | None = None,
                 oracle: bool = False, oracle_cap: int = 2000, n_jobs: int = 1,
                 data: Dataset | None = None) -> ExperimentReport:
    """Repeated random train/test splits of a CSV file (or an in-memory dataset)."""
    data = load_csv(csv_path, target) if data is None else data
    config = {
        "protocol": "realdata", "csv": str(csv_path), "target": target,
        "test_fraction": test_fraction, "iterations": iterations, "seed": seed,
        "g": g, "l": l, "v": v, "oracle": oracle, "nlpd_variance": "noisy",
    }
    report = ExperimentReport(config)
    for it in range(iterations):
        it_seed = derive_seed(seed, f"iteration-{it}")
        train_data, test_data = random_split(data, test_fraction, derive_seed(it_seed, "split"))
        cfg = TwinGPConfig(g=g, l=l, v=v, seed=it_seed)
        gg, ll, vv = cfg.sizes(train_data.n, train_data.d)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            gg2, ll2, vv2 = feasible_sizes(train_data.n, train_data.d, gg, ll, vv)
        for w in caught:
            logger.warning("%s", w.message)
            warnings.warn(str(w.message), RuntimeWarning, stacklevel=2)
        cfg = TwinGPConfig(g=gg2, l=ll2, v=vv2, seed=it_seed)
        _fit_and_score(train_data, test_data.inputs, test_data.outputs, test_data.outputs, cfg,
                       True, report, it_seed, oracle, oracle_cap, n_jobs)
    return report
