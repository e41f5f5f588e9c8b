"""Experiment harness, config parsing, output files and CLI."""

import csv
import dataclasses
import json
import math
import os

import numpy as np
import pytest

import kernel_bayes
from kernel_bayes import cli, experiments
from kernel_bayes.embeddings import JointSample
from kernel_bayes.errors import ConfigError, NumericError
from kernel_bayes.experiments import (
    CSV_SCHEMA_VERSION,
    ExperimentConfig,
    default_config,
    kbr_posterior_means,
    load_config,
    parse_config,
    run_experiment,
    substream,
    summarize,
    write_outputs,
)
from kernel_bayes.kernels import GaussianRBF
from kernel_bayes.linalg import RegularizationSchedule
from kernel_bayes.modelsel import median_bandwidth
from kernel_bayes.oracles import (
    GaussianJointConfig,
    RotationDynamicsConfig,
    gaussian_conjugate_posterior_mean,
    rotation_ekf_model,
    simulate_rotation,
)
from kernel_bayes.statespace import ekf_filter, filter_train, run_kbr_filter


def tiny_posterior(**kw):
    base = dict(dims=(2,), n=(40,), n_test=5, seeds=(0, 1), methods=("kbr-median", "kdeiw-best"),
                kde_grid=(2.0, 4.0))
    base.update(kw)
    return default_config("posterior-gaussian", **base)


def tiny_abc(**kw):
    base = dict(dims=(1,), n_test=3, seeds=(0, 1), taus=(0.5,), budgets=(50, 100),
                abc_draws=20000, abc_accept=20)
    base.update(kw)
    return default_config("abc-compare", **base)


def tiny_filter(**kw):
    base = dict(datasets=("b",), T=(40,), seeds=(0,), hyper="median", rank=None, test_length=30)
    base.update(kw)
    return default_config("filter-synthetic", **base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults_valid_for_every_experiment(self):
        for name in experiments.EXPERIMENTS:
            for paper in (False, True):
                cfg = default_config(name, paper)
                assert cfg.experiment == name
                assert cfg.paper_scale is paper

    def test_paper_scale_overlay(self):
        assert default_config("posterior-gaussian", True).dims == (2, 4, 8, 16, 32, 64)
        assert len(default_config("filter-synthetic", True).seeds) == 30
        assert default_config("abc-compare", True).abc_draws == 100_000_000

    def test_parse_lists_comments_and_seed_count(self):
        cfg = parse_config(
            """
            experiment = posterior-gaussian
            dims = 2, 4   # two sizes
            n = 100
            seeds = 3
            eps_scale = 0.05
            normalize = yes
            methods = kbr-median
            """
        )
        assert cfg.dims == (2, 4)
        assert cfg.n == (100,)
        assert cfg.seeds == (0, 1, 2)
        assert cfg.eps_scale == 0.05
        assert cfg.normalize is True
        assert cfg.methods == ("kbr-median",)

    def test_explicit_seed_list(self):
        cfg = parse_config("seeds = 4, 7, 9", experiment="abc-compare")
        assert cfg.seeds == (4, 7, 9)

    def test_rank_none(self):
        assert parse_config("rank = none", experiment="abc-compare").rank is None
        assert parse_config("rank = 30", experiment="abc-compare").rank == 30

    @pytest.mark.parametrize(
        "text",
        [
            "bogus = 1",
            "dims = two",
            "normalize = maybe",
            "hyper = guess",
            "taus = 0.1, -1",
            "seeds = 0, 1\nexperiment = filter-synthetic",
            "dims = 0",
            "this is not a key value line",
        ],
    )
    def test_bad_configs_raise(self, text):
        with pytest.raises(ConfigError):
            parse_config(text, experiment="abc-compare")

    def test_missing_experiment(self):
        with pytest.raises(ConfigError):
            parse_config("dims = 2")

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            default_config("nope")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")

    def test_config_error_is_value_error(self):
        with pytest.raises(ValueError):
            parse_config("bogus = 1", experiment="abc-compare")

    def test_hash_stable_and_sensitive(self):
        a = tiny_posterior()
        assert a.hash() == tiny_posterior().hash()
        assert a.hash() == dataclasses.replace(a, output_dir="elsewhere").hash()
        assert a.hash() != dataclasses.replace(a, root_seed=1).hash()
        assert len(a.hash()) == 12

    def test_frozen(self):
        with pytest.raises(dataclasses.FrozenInstanceError):
            tiny_posterior().n = (5,)


class TestSubstream:
    def test_deterministic(self):
        a = substream(3, 1, "train").standard_normal(5)
        b = substream(3, 1, "train").standard_normal(5)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("other", [(4, 1, "train"), (3, 2, "train"), (3, 1, "test")])
    def test_distinct(self, other):
        a = substream(3, 1, "train").standard_normal(5)
        b = substream(*other).standard_normal(5)
        assert not np.allclose(a, b)


class TestSummarize:
    def test_statistics(self):
        rows = [{"g": "a", "m": v} for v in (1.0, 2.0, 6.0)] + [{"g": "b", "m": 4.0}]
        out = summarize(rows, ("g",), "m")
        assert [r["g"] for r in out] == ["a", "b"]
        assert out[0]["mean"] == pytest.approx(3.0)
        assert out[0]["median"] == 2.0
        assert out[0]["stderr"] == pytest.approx(np.std([1, 2, 6], ddof=1) / math.sqrt(3))
        assert out[1]["stderr"] == 0.0

    def test_nan_counted_as_failure(self):
        rows = [{"g": 1, "m": float("nan")}, {"g": 1, "m": 2.0}, {"g": 2, "m": float("nan")}]
        out = summarize(rows, ("g",), "m")
        assert out[0]["n_failed"] == 1 and out[0]["mean"] == 2.0
        assert out[1]["n_failed"] == 1 and math.isnan(out[1]["median"])

    def test_numeric_group_order(self):
        rows = [{"b": b, "m": 0.0} for b in (1600, 200, 800)]
        assert [r["b"] for r in summarize(rows, ("b",), "m")] == [200, 800, 1600]


class TestPosteriorExperiment:
    def test_rows_and_columns(self):
        res = run_experiment(tiny_posterior())
        assert len(res.rows) == 2 * 2
        for r in res.rows:
            assert {"seed", "root_seed", "config_hash", "version", "mse", "method", "d", "n"} <= set(r)
            assert r["version"] == kernel_bayes.__version__
            assert np.isfinite(r["mse"])

    def test_degenerate_joint_recovers_observation(self, rng):
        # Y = X exactly, so E[X | Y = y] = y for any prior covering y
        X = rng.standard_normal((200, 2))
        U = rng.standard_normal((200, 2))
        y = np.array([[0.3, -0.2]])
        est = kbr_posterior_means(JointSample(X, X), U, y, eps=1e-6, delta_op=2e-6)
        assert np.sum((est - y) ** 2) < 1e-2

    def test_error_shrinks_with_n_in_median(self):
        cfg = default_config("posterior-gaussian", dims=(2,), n=(100, 400), n_test=50,
                             seeds=tuple(range(6)), methods=("kbr-median",))
        summary = {s["n"]: s["median"] for s in run_experiment(cfg).summary}
        assert summary[400] <= summary[100]


class TestAbcExperiment:
    def test_rows(self):
        res = run_experiment(tiny_abc())
        methods = {r["method"] for r in res.rows}
        assert methods == {"kbr", "cond-mean", "abc", "abc-target"}
        # 2 seeds x (2 budgets x 2 kernel methods + 2 budgets abc + 1 target)
        assert len(res.rows) == 2 * (4 + 2 + 1)
        target = [r for r in res.rows if r["method"] == "abc-target"]
        for r in target:
            assert r["accepted"] == 3 * 20
            assert r["draws"] <= 3 * 20000

    def test_empty_acceptance_is_nan(self):
        res = run_experiment(tiny_abc(taus=(1e-6,), budgets=(10,), abc_draws=10))
        abc = [r for r in res.rows if r["method"].startswith("abc")]
        assert abc and all(math.isnan(r["error"]) for r in abc)
        assert all(s["n_failed"] == s["n_runs"] for s in res.summary if s["method"].startswith("abc"))

    def test_huge_tolerance_returns_prior_mean(self):
        cfg = tiny_abc(taus=(1e9,), budgets=(50,), seeds=(0,), n_test=4, abc_draws=20000, abc_accept=20000)
        res = run_experiment(cfg)
        row = next(r for r in res.rows if r["method"] == "abc-target")
        model = GaussianJointConfig.draw(1, substream(cfg.root_seed, 0, "model/d=1"))
        ys = model.sample_test_points(4, substream(cfg.root_seed, 0, "test/d=1"))
        truth = gaussian_conjugate_posterior_mean(model, ys)
        prior_mean = np.zeros(1)
        expected = np.mean(np.sum((truth - prior_mean) ** 2, axis=1))
        assert row["accepted"] == 4 * 20000
        assert row["error"] == pytest.approx(expected, rel=0.1, abs=1e-3)


class TestFilterExperiment:
    def test_rows(self):
        res = run_experiment(tiny_filter())
        assert {r["method"] for r in res.rows} == {"kbr", "ekf"}
        kbr = next(r for r in res.rows if r["method"] == "kbr")
        assert kbr["beta"] == 1.0 and kbr["eps"] == res.config.eps

    def test_near_noiseless_dynamics(self):
        dyn = RotationDynamicsConfig(0.3, 0.0, 1.0, 1e-3, 1e-3)
        train = simulate_rotation(dyn, 201, 0)
        test = simulate_rotation(dyn, 300, 1)
        kx = GaussianRBF(median_bandwidth(train.x[:200]))
        ky = GaussianRBF(median_bandwidth(train.y[:200]))
        model = filter_train(train.x, train.y, kx, ky, RegularizationSchedule(1e-6, 2e-6))
        est = run_kbr_filter(model, test.y).estimates
        ekf, _ = ekf_filter(rotation_ekf_model(dyn), test.y, np.zeros(2), np.eye(2))
        assert np.mean(np.sum((est - test.x) ** 2, axis=1)) < 1e-2
        assert np.mean(np.sum((ekf - test.x) ** 2, axis=1)) < 1e-2


class TestOutputs:
    @pytest.mark.parametrize("make", [tiny_posterior, tiny_abc, tiny_filter])
    def test_reruns_bit_identical(self, tmp_path, make):
        cfg = make()
        write_outputs(run_experiment(cfg), tmp_path / "a")
        write_outputs(run_experiment(cfg), tmp_path / "b")
        for name in ("runs.csv", "summary.csv", "config.json"):
            a = (tmp_path / "a" / cfg.experiment / name).read_bytes()
            b = (tmp_path / "b" / cfg.experiment / name).read_bytes()
            assert a == b, name

    @pytest.mark.parametrize("make", [tiny_posterior, tiny_abc, tiny_filter])
    def test_summary_recomputes_from_runs(self, tmp_path, make):
        res = run_experiment(make())
        write_outputs(res, tmp_path)
        base = tmp_path / res.config.experiment
        runs = read_csv(base / "runs.csv")
        summary = read_csv(base / "summary.csv")
        groups = {}
        for r in runs:
            groups.setdefault(tuple(r[k] for k in res.group_keys), []).append(float(r[res.metric]))
        assert len(groups) == len(summary)
        for s in summary:
            vals = [v for v in groups[tuple(s[k] for k in res.group_keys)] if math.isfinite(v)]
            assert int(s["n_runs"]) - int(s["n_failed"]) == len(vals)
            if vals:
                assert float(s["mean"]) == pytest.approx(np.mean(vals), rel=1e-12)
                assert float(s["median"]) == pytest.approx(np.median(vals), rel=1e-12)
            assert s["config_hash"] == res.config.hash()
            assert int(s["csv_schema"]) == CSV_SCHEMA_VERSION

    def test_files_and_metadata(self, tmp_path):
        res = run_experiment(tiny_abc())
        files = write_outputs(res, tmp_path)
        names = {os.path.basename(f) for f in files}
        assert names == {"runs.csv", "timing.csv", "summary.csv", "config.json", "plot.svg"}
        meta = json.loads((tmp_path / "abc-compare" / "config.json").read_text())
        assert meta["config_hash"] == res.config.hash()
        assert meta["version"] == kernel_bayes.__version__
        assert meta["rng"]
        runs = read_csv(tmp_path / "abc-compare" / "runs.csv")
        assert "wallclock" not in runs[0]
        assert all(r["seed"] != "" and r["config_hash"] == res.config.hash() for r in runs)

    def test_filter_trajectory_file(self, tmp_path):
        res = run_experiment(tiny_filter())
        write_outputs(res, tmp_path)
        rows = read_csv(tmp_path / "filter-synthetic" / "trajectory_b_T40.csv")
        assert len(rows) == res.config.test_length
        assert {"t", "theta", "x0", "x1", "y0", "y1", "kbr_0", "kbr_1", "ekf_0", "ekf_1"} == set(rows[0])

    def test_plot_failure_does_not_fail_run(self, tmp_path, monkeypatch):
        def broken(*a, **k):
            raise RuntimeError("no plotting today")

        monkeypatch.setattr(experiments, "_plot", broken)
        files = write_outputs(run_experiment(tiny_filter()), tmp_path)
        assert not any(f.endswith(".svg") for f in files)
        assert (tmp_path / "filter-synthetic" / "runs.csv").exists()


class TestCli:
    def test_success(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("datasets = b\nT = 30\nseeds = 1\nhyper = median\nrank = none\ntest_length = 20\n")
        code = cli.main(["filter-synthetic", "--config", str(cfg), "--out", str(tmp_path / "out"), "--seed", "5"])
        assert code == cli.EXIT_OK
        assert "runs.csv" in capsys.readouterr().out
        runs = read_csv(tmp_path / "out" / "filter-synthetic" / "runs.csv")
        assert {r["root_seed"] for r in runs} == {"5"}

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus = 1\n")
        assert cli.main(["abc-compare", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
        assert "bogus" in capsys.readouterr().err

    def test_missing_config_exit(self, tmp_path):
        assert cli.main(["abc-compare", "--config", str(tmp_path / "nope.cfg")]) == cli.EXIT_CONFIG

    def test_numeric_failure_exit(self, tmp_path, monkeypatch):
        def fail(cfg):
            raise NumericError("singular", delta=1e-9)

        monkeypatch.setattr(cli, "run_experiment", fail)
        assert cli.main(["abc-compare", "--out", str(tmp_path)]) == cli.EXIT_NUMERIC

    def test_unknown_experiment_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["nope"])
        assert exc.value.code == 2

    def test_exit_codes_distinct(self):
        assert len({cli.EXIT_OK, cli.EXIT_CONFIG, cli.EXIT_NUMERIC}) == 3
        assert ExperimentConfig  # public type importable
