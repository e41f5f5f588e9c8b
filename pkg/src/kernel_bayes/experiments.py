"""Batch experiments: Gaussian posterior study, ABC comparison, rotation filtering.

Every run draws its randomness from named substreams of one root seed, so
a row is reproducible from ``(root_seed, seed, config)`` alone. Output rows
carry the seed, a hash of the resolved config and the package version.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import statistics
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .baselines import AbcConfig, KdeConfig, abc_rejection, kde_iw_weight_matrix, kde_loo_bandwidth
from .embeddings import JointSample, WeightedSample, empirical_mean_embedding
from .errors import ConfigError
from .kbr import build_posterior_operator, posterior_weight_matrix
from .kernels import GaussianRBF, gram_entries, gram_matrix
from .linalg import RegularizationSchedule, incomplete_cholesky, solve_regularized, solve_woodbury
from .modelsel import kbr_cross_validate, make_cv_plan, median_bandwidth
from .oracles import (
    RNG_NAME,
    GaussianJointConfig,
    RotationDynamicsConfig,
    gaussian_conjugate_posterior_mean,
    rotation_ekf_model,
    simulate_rotation,
    write_trajectory_csv,
)
from .statespace import ekf_filter, filter_train, run_kbr_filter, select_filter_params
from .svgplot import line_plot

log = logging.getLogger(__name__)

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentResult",
    "default_config",
    "parse_config",
    "load_config",
    "substream",
    "summarize",
    "run_posterior_gaussian",
    "run_abc_compare",
    "run_filter_synthetic",
    "run_experiment",
    "write_outputs",
]

EXPERIMENTS = ("posterior-gaussian", "abc-compare", "filter-synthetic")
POSTERIOR_METHODS = ("kbr-median", "kbr-cv", "kdeiw-best", "kdeiw-cv-substitute")
CSV_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dims: tuple = (2,)
    n: tuple = (200,)
    ell: int | None = None
    n_test: int = 100
    seeds: tuple = tuple(range(10))
    root_seed: int = 0
    hyper: str = "median"
    methods: tuple = ("kbr-median", "kbr-cv", "kdeiw-best", "kdeiw-cv-substitute")
    eps_scale: float = 0.01
    delta_factor: float = 2.0
    normalize: bool = False
    kde_grid: tuple = tuple(2.0 * i for i in range(1, 11))
    cv_folds: int = 10
    # abc-compare
    taus: tuple = (1.0, 0.3, 0.1)
    budgets: tuple = (100, 200, 400, 800, 1600)
    abc_draws: int = 10_000_000
    abc_accept: int = 500
    cm_eps_scale: float = 0.01
    lowrank_above: int = 500
    rank: int | None = None
    # filter-synthetic
    datasets: tuple = ("a", "b")
    T: tuple = (400,)
    test_length: int = 1000
    betas: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    epsilons: tuple = (1e-4, 1e-3, 1e-2, 1e-1)
    beta: float = 1.0
    eps: float = 1e-3
    point: str = "preimage"
    output_dir: str = "results"
    paper_scale: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.hyper not in ("median", "cv", "explicit"):
            raise ConfigError(f"hyper must be median, cv or explicit, got {self.hyper!r}")
        if any(d < 1 for d in self.dims):
            raise ConfigError("dims must be positive")
        if self.n_test < 1 or self.test_length < 2:
            raise ConfigError("n_test must be >= 1 and test_length >= 2")
        if self.experiment == "posterior-gaussian":
            bad = set(self.methods) - set(POSTERIOR_METHODS)
            if bad:
                raise ConfigError(f"unknown methods {sorted(bad)}")
            if min(self.n) < 2 * self.cv_folds and "kbr-cv" in self.methods:
                raise ConfigError("n must be at least 2 * cv_folds for kbr-cv")
            if min(self.n) < 2:
                raise ConfigError("n must be at least 2")
        if self.experiment == "abc-compare":
            if any(t <= 0 for t in self.taus) or min(self.budgets) < 2:
                raise ConfigError("taus must be positive and budgets at least 2")
            if self.abc_accept < 1 or self.abc_draws < 1:
                raise ConfigError("abc_accept and abc_draws must be positive")
        if self.experiment == "filter-synthetic":
            if set(self.datasets) - {"a", "b"}:
                raise ConfigError("datasets must be drawn from {a, b}")
            if min(self.T) < 4:
                raise ConfigError("T must be at least 4")
            if self.point not in ("preimage", "mean"):
                raise ConfigError("point must be preimage or mean")
        if self.eps_scale <= 0 or self.delta_factor <= 0 or self.cm_eps_scale <= 0:
            raise ConfigError("regularization scales must be positive")

    def hash(self) -> str:
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


_PAPER_SCALE = {
    "posterior-gaussian": {"dims": (2, 4, 8, 16, 32, 64), "n_test": 1000},
    "abc-compare": {"n_test": 10, "abc_draws": 100_000_000, "abc_accept": 2000, "budgets": (200, 400, 800, 1600, 3200, 6400)},
    "filter-synthetic": {"seeds": tuple(range(30)), "T": (200, 400, 600, 800, 1000)},
}

_DESK = {
    "posterior-gaussian": {},
    "abc-compare": {"n_test": 10, "rank": 100},
    "filter-synthetic": {"hyper": "cv", "rank": 60},
}


def default_config(experiment: str, paper_scale: bool = False, **overrides) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    values = dict(_DESK[experiment])
    if paper_scale:
        values.update(_PAPER_SCALE[experiment])
    values.update(overrides)
    return ExperimentConfig(experiment=experiment, paper_scale=paper_scale, **values)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(name, raw: str):
    default = _FIELDS[name].default
    text = raw.strip()
    try:
        if name == "seeds":
            parts = [p for p in text.replace(",", " ").split() if p]
            if len(parts) == 1:
                return tuple(range(int(parts[0])))
            return tuple(int(p) for p in parts)
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if default and isinstance(default[0], str):
                return tuple(parts)
            if name in ("dims", "n", "budgets", "T"):
                return tuple(int(p) for p in parts)
            return tuple(float(p) for p in parts)
        if name in ("ell", "rank"):
            return None if text.lower() in ("", "none") else int(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, *, experiment: str | None = None, paper_scale: bool = False) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` comments, comma-separated lists).

    ``seeds`` is either a count or an explicit list of run indices.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    items = dict(parser["config"])
    exp = items.pop("experiment", None) or experiment
    if experiment is not None and exp != experiment:
        raise ConfigError(f"config is for {exp!r}, not {experiment!r}")
    if exp is None:
        raise ConfigError("config does not name an experiment")
    if "paper_scale" in items:
        paper_scale = _convert("paper_scale", items.pop("paper_scale")) or paper_scale
    overrides = {}
    for key, raw in items.items():
        if key not in _FIELDS or key == "experiment":
            raise ConfigError(f"unknown config key {key!r}")
        overrides[key] = _convert(key, raw)
    return default_config(exp, paper_scale, **overrides)


def load_config(path, **kw) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read(), **kw)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def substream(root_seed: int, run: int, name: str) -> np.random.Generator:
    """Independent generator for ``(root_seed, run, name)``."""
    ss = np.random.SeedSequence(root_seed, spawn_key=(int(run), zlib.crc32(name.encode())))
    return np.random.default_rng(ss)


def _mse(est, truth) -> float:
    return float(np.mean(np.sum((np.asarray(est) - truth) ** 2, axis=1)))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    group_keys: tuple
    metric: str
    summary: list = field(default_factory=list)
    files: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)  # file stem -> (trajectory, estimates)


def _sort_key(v):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return (0, float(v), "")
    return (1, 0.0, str(v))


def summarize(rows, group_keys, metric) -> list[dict]:
    """Per-group count, mean, median and standard error of ``metric``.

    Non-finite values are counted in ``n_failed`` and left out of the
    statistics.
    """
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in group_keys), []).append(float(r[metric]))
    out = []
    for key in sorted(groups, key=lambda k: tuple(_sort_key(v) for v in k)):
        vals = groups[key]
        finite = [v for v in vals if math.isfinite(v)]
        row = dict(zip(group_keys, key))
        row["n_runs"] = len(vals)
        row["n_failed"] = len(vals) - len(finite)
        if finite:
            row["mean"] = statistics.fmean(finite)
            row["median"] = statistics.median(finite)
            row["stderr"] = statistics.stdev(finite) / math.sqrt(len(finite)) if len(finite) > 1 else 0.0
        else:
            row["mean"] = row["median"] = row["stderr"] = float("nan")
        out.append(row)
    return out


def _common(cfg, run):
    return {"seed": run, "root_seed": cfg.root_seed, "config_hash": cfg.hash(), "version": __version__}


# ---------------------------------------------------------------------------
# Gaussian posterior study
# ---------------------------------------------------------------------------


def kbr_posterior_means(joint, prior_points, ys, *, eps, delta_op, beta=1.0, normalize=False):
    """KBR estimates of ``E[X | y]`` at each row of ``ys`` (median bandwidths times ``beta``).

    ``delta_op`` is on the covariance-operator scale.
    """
    kx = GaussianRBF(beta * median_bandwidth(joint.x))
    ky = GaussianRBF(beta * median_bandwidth(joint.y))
    U = np.asarray(prior_points, dtype=float)
    prior = WeightedSample(U, np.full(U.shape[0], 1.0 / U.shape[0]))
    sched = RegularizationSchedule.operator_scale(eps, delta_op, joint.n)
    op = build_posterior_operator(joint, prior, kx, ky, sched)
    W = posterior_weight_matrix(op, ys)
    est = W @ joint.x
    if normalize:
        est = est / W.sum(axis=1, keepdims=True)
    return est


def run_posterior_gaussian(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for d in cfg.dims:
        for run in cfg.seeds:
            model = GaussianJointConfig.draw(d, substream(cfg.root_seed, run, f"model/d={d}"))
            ys = model.sample_test_points(cfg.n_test, substream(cfg.root_seed, run, f"test/d={d}"))
            truth = gaussian_conjugate_posterior_mean(model, ys)
            for n in cfg.n:
                rng = substream(cfg.root_seed, run, f"train/d={d}/n={n}")
                X, Y = model.sample_joint(n, rng)
                U = model.sample_prior(cfg.ell or n, rng)
                joint = JointSample(X, Y)
                eps = cfg.eps_scale / n
                for method in cfg.methods:
                    param = ""
                    if method == "kbr-median":
                        est = kbr_posterior_means(
                            joint, U, ys, eps=eps, delta_op=cfg.delta_factor * eps, normalize=cfg.normalize
                        )
                        err = _mse(est, truth)
                    elif method == "kbr-cv":
                        seed = int(substream(cfg.root_seed, run, f"cv/d={d}/n={n}").integers(2**31))
                        grid = [(b, s / n, cfg.delta_factor * s / n) for b in cfg.betas for s in cfg.epsilons]
                        plan = make_cv_plan(n, cfg.cv_folds, grid, seed)
                        base_x = GaussianRBF(median_bandwidth(X))
                        base_y = GaussianRBF(median_bandwidth(Y))
                        beta, e, dl = kbr_cross_validate(joint, plan, base_x, base_y).best
                        est = kbr_posterior_means(joint, U, ys, eps=e, delta_op=dl, beta=beta, normalize=cfg.normalize)
                        err = _mse(est, truth)
                        param = f"beta={beta:g};eps={e:.3g}"
                    elif method == "kdeiw-best":
                        errs = []
                        for h in cfg.kde_grid:
                            Z = kde_iw_weight_matrix(joint, U, KdeConfig(h, h), ys)
                            errs.append(_mse(Z @ U, truth))
                        i = int(np.argmin(errs))
                        err, param = errs[i], f"h={cfg.kde_grid[i]:g}"
                    else:
                        h = kde_loo_bandwidth(joint, cfg.kde_grid)
                        err = _mse(kde_iw_weight_matrix(joint, U, KdeConfig(h, h), ys) @ U, truth)
                        param = f"h={h:g}"
                    rows.append({"experiment": cfg.experiment, "d": d, "n": n, "method": method,
                                 **_common(cfg, run), "mse": err, "param": param})
                    log.info("d=%d n=%d seed=%d %s mse=%.4g", d, n, run, method, err)
    keys = ("d", "n", "method")
    rows.sort(key=lambda r: (r["d"], r["n"], r["method"], r["seed"]))
    return ExperimentResult(cfg, rows, keys, "mse", summarize(rows, keys, "mse"))


# ---------------------------------------------------------------------------
# ABC vs kernel methods
# ---------------------------------------------------------------------------


def _kernel_factor(k, X, rank):
    return incomplete_cholesky(gram_entries(k, X), X.shape[0], max_rank=rank)


def conditional_mean_estimates(joint, ys, eps, *, rank=None):
    """``sum_j nu_j X_j`` with ``nu = (G_Y + n eps I)^{-1} k_Y(y)`` for each row of ``ys``."""
    ky = GaussianRBF(median_bandwidth(joint.y))
    K = gram_matrix(ky, joint.y, ys)
    c = joint.n * eps
    if rank is None:
        nu = solve_regularized(gram_matrix(ky, joint.y), c, K)
    else:
        f = _kernel_factor(ky, joint.y, rank)
        nu = solve_woodbury(c, f.gamma, f.gamma.T, K)
    return nu.T @ joint.x


def kbr_sampling_estimates(joint, ys, eps, delta_op, *, rank=None):
    """KBR with the proposal sample itself as prior (the likelihood-free setting)."""
    kx = GaussianRBF(median_bandwidth(joint.x))
    ky = GaussianRBF(median_bandwidth(joint.y))
    sched = RegularizationSchedule.operator_scale(eps, delta_op, joint.n)
    lowrank = None
    if rank is not None:
        lowrank = (_kernel_factor(kx, joint.x, rank), _kernel_factor(ky, joint.y, rank))
    op = build_posterior_operator(joint, empirical_mean_embedding(joint.x), kx, ky, sched, lowrank)
    return posterior_weight_matrix(op, ys) @ joint.x


def _abc_row(cfg, run, model, ys, truth, method, tau, budget, target):
    means, accepted, draws, wall = [], 0, 0, 0.0
    for j, y in enumerate(ys):
        seed = int(substream(cfg.root_seed, run, f"abc/y={j}").integers(2**31))
        res = abc_rejection(
            lambda rng, m: model.sample_prior(m, rng),
            lambda xs, rng: model.sample_likelihood(xs, rng),
            y,
            AbcConfig(tau, budget, seed, batch_size=65536, target_accepted=target),
        )
        means.append(res.mean())
        accepted += res.accepted.shape[0]
        draws += res.draws
        wall += res.wallclock
    est = np.array(means)
    err = _mse(est, truth) if np.all(np.isfinite(est)) else float("nan")
    return {"experiment": cfg.experiment, "method": method, "tau": tau, "budget": budget,
            **_common(cfg, run), "error": err, "draws": draws, "accepted": accepted, "wallclock": wall}


def run_abc_compare(cfg: ExperimentConfig) -> ExperimentResult:
    """Error against draw budget for rejection ABC, KBR and the conditional mean.

    Budgets count likelihood draws. Kernel methods spend ``n`` draws once for
    all conditioning points; ABC (``method="abc"``) spends its budget per
    conditioning point. The ``abc-target`` rows instead run ABC until
    ``abc_accept`` acceptances (capped at ``abc_draws`` proposals) at each
    tolerance, which is the accuracy-versus-cost sweep over ``tau``. A run
    where ABC accepts nothing at some point is recorded as NaN.
    """
    d = cfg.dims[0]
    rows = []
    for run in cfg.seeds:
        model = GaussianJointConfig.draw(d, substream(cfg.root_seed, run, f"model/d={d}"))
        ys = model.sample_test_points(cfg.n_test, substream(cfg.root_seed, run, f"test/d={d}"))
        truth = gaussian_conjugate_posterior_mean(model, ys)
        for n in cfg.budgets:
            rng = substream(cfg.root_seed, run, f"train/n={n}")
            X = model.sample_prior(n, rng)
            joint = JointSample(X, model.sample_likelihood(X, rng))
            rank = cfg.rank if (cfg.rank is not None and n > cfg.lowrank_above) else None
            t0 = time.perf_counter()
            est = kbr_sampling_estimates(joint, ys, cfg.eps_scale / n, cfg.delta_factor * cfg.eps_scale / n, rank=rank)
            t1 = time.perf_counter()
            est_cm = conditional_mean_estimates(joint, ys, cfg.cm_eps_scale / math.sqrt(n), rank=rank)
            t2 = time.perf_counter()
            for method, e, wall in (("kbr", est, t1 - t0), ("cond-mean", est_cm, t2 - t1)):
                rows.append({"experiment": cfg.experiment, "method": method, "tau": "", "budget": n,
                             **_common(cfg, run), "error": _mse(e, truth), "draws": n,
                             "accepted": "", "wallclock": wall})
        for tau in cfg.taus:
            for budget in cfg.budgets:
                rows.append(_abc_row(cfg, run, model, ys, truth, "abc", tau, budget, None))
            rows.append(_abc_row(cfg, run, model, ys, truth, "abc-target", tau, cfg.abc_draws, cfg.abc_accept))
    keys = ("method", "tau", "budget")
    rows.sort(key=lambda r: (r["method"], _sort_key(r["tau"]), r["budget"], r["seed"]))
    return ExperimentResult(cfg, rows, keys, "error", summarize(rows, keys, "error"))


# ---------------------------------------------------------------------------
# Rotation filtering
# ---------------------------------------------------------------------------


def run_filter_synthetic(cfg: ExperimentConfig) -> ExperimentResult:
    """KBR filter against the EKF on the rotation dynamics.

    The test trajectory and both filters' estimates for the first seed are
    kept for ``trajectory_<dataset>_T<T>.csv``.
    """
    rows, trajectories = [], {}
    for name in cfg.datasets:
        dyn = RotationDynamicsConfig.preset(name)
        ekf_model = rotation_ekf_model(dyn)
        for T in cfg.T:
            for run in cfg.seeds:
                train = simulate_rotation(dyn, T + 1, substream(cfg.root_seed, run, f"train/{name}/T={T}"))
                test = simulate_rotation(dyn, cfg.test_length, substream(cfg.root_seed, run, f"test/{name}"))
                if cfg.hyper == "cv":
                    sel = select_filter_params(train.x, train.y, betas=cfg.betas, epsilons=cfg.epsilons,
                                               delta_factor=cfg.delta_factor, point=cfg.point, rank=cfg.rank)
                    beta, eps = sel.beta, sel.eps
                elif cfg.hyper == "median":
                    beta, eps = 1.0, cfg.eps
                else:
                    beta, eps = cfg.beta, cfg.eps
                kx = GaussianRBF(beta * median_bandwidth(train.x[:T]))
                ky = GaussianRBF(beta * median_bandwidth(train.y[:T]))
                model = filter_train(train.x, train.y, kx, ky,
                                     RegularizationSchedule(eps, cfg.delta_factor * eps), rank=cfg.rank)
                est = run_kbr_filter(model, test.y, point=cfg.point).estimates
                ekf_means, _ = ekf_filter(ekf_model, test.y, np.zeros(2), np.eye(2))
                if run == cfg.seeds[0]:
                    trajectories[f"trajectory_{name}_T{T}"] = (test, {"kbr": est, "ekf": ekf_means})
                common = _common(cfg, run)
                for method, e in (("kbr", est), ("ekf", ekf_means)):
                    rows.append({"experiment": cfg.experiment, "dataset": name, "method": method, "T": T,
                                 **common, "mse": _mse(e, test.x),
                                 "beta": beta if method == "kbr" else "", "eps": eps if method == "kbr" else ""})
                log.info("dataset=%s T=%d seed=%d kbr=%.4g ekf=%.4g", name, T, run, rows[-2]["mse"], rows[-1]["mse"])
    keys = ("dataset", "method", "T")
    rows.sort(key=lambda r: (r["dataset"], r["method"], r["T"], r["seed"]))
    return ExperimentResult(cfg, rows, keys, "mse", summarize(rows, keys, "mse"), trajectories=trajectories)


_RUNNERS = {
    "posterior-gaussian": run_posterior_gaussian,
    "abc-compare": run_abc_compare,
    "filter-synthetic": run_filter_synthetic,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return _RUNNERS[cfg.experiment](cfg)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path, rows):
    if not rows:
        return
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _plot(result: ExperimentResult, path):
    cfg = result.config
    series = {}
    if cfg.experiment == "posterior-gaussian":
        for s in result.summary:
            key = f"{s['method']} (n={s['n']})"
            series.setdefault(key, ([], []))
            series[key][0].append(s["d"])
            series[key][1].append(s["mean"])
        line_plot(path, series, title="Posterior mean MSE", xlabel="dimension", ylabel="MSE",
                  logx=True, logy=True)
    elif cfg.experiment == "abc-compare":
        for s in result.summary:
            key = s["method"] if s["method"] != "abc" else f"abc tau={s['tau']}"
            series.setdefault(key, ([], []))
            series[key][0].append(s["budget"])
            series[key][1].append(s["median"])
        line_plot(path, series, title="Error vs likelihood draws", xlabel="draws", ylabel="median MSE",
                  logx=True, logy=True)
    else:
        for s in result.summary:
            key = f"{s['method']} ({s['dataset']})"
            series.setdefault(key, ([], []))
            series[key][0].append(s["T"])
            series[key][1].append(s["mean"])
        line_plot(path, series, title="Filtering MSE", xlabel="training length T", ylabel="MSE")


def write_outputs(result: ExperimentResult, out_dir: str | None = None) -> list[str]:
    """Write ``runs.csv``, ``summary.csv``, ``config.json`` and ``plot.svg``
    (plus ``timing.csv`` when rows carry wall-clock times).

    Plotting errors are logged and do not fail the run.
    """
    cfg = result.config
    base = os.path.join(out_dir or cfg.output_dir, cfg.experiment)
    os.makedirs(base, exist_ok=True)
    files = []
    runs_path = os.path.join(base, "runs.csv")
    # wall-clock times vary between reruns, so they live in their own file
    # and runs.csv stays bit-identical for a fixed config
    _write_csv(runs_path, [{k: v for k, v in r.items() if k != "wallclock"} for r in result.rows])
    files.append(runs_path)
    if result.rows and "wallclock" in result.rows[0]:
        timing_path = os.path.join(base, "timing.csv")
        keys = (*result.group_keys, "seed", "wallclock")
        _write_csv(timing_path, [{k: r[k] for k in keys} for r in result.rows])
        files.append(timing_path)
    summary_path = os.path.join(base, "summary.csv")
    meta = {"config_hash": cfg.hash(), "version": __version__, "csv_schema": CSV_SCHEMA_VERSION}
    _write_csv(summary_path, [{**s, **meta} for s in result.summary])
    files.append(summary_path)
    cfg_path = os.path.join(base, "config.json")
    with open(cfg_path, "w") as fh:
        json.dump({**dataclasses.asdict(cfg), **meta, "rng": RNG_NAME}, fh, indent=2, sort_keys=True, default=str)
    files.append(cfg_path)
    for stem, (traj, estimates) in sorted(result.trajectories.items()):
        path = os.path.join(base, f"{stem}.csv")
        write_trajectory_csv(path, traj, estimates)
        files.append(path)
    plot_path = os.path.join(base, "plot.svg")
    try:
        _plot(result, plot_path)
        files.append(plot_path)
    except Exception:  # plotting must never fail a run
        log.exception("plotting failed")
    result.files = files
    return files
