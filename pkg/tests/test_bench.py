"""Test function catalog, benchmark runner, timing harness and CLI."""

import csv
import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from bayopt.bench import (
    builtin_functions,
    main,
    read_trace,
    run_benchmark,
    run_timing,
    write_trace,
)


class TestCatalog:
    def test_ackley_at_origin(self):
        func = builtin_functions(3)["ackley"]
        assert abs(func.fn(np.zeros(3))) <= 1e-9

    def test_rosenbrock_at_ones(self):
        func = builtin_functions(2)["rosenbrock"]
        assert func.fn(np.ones(2)) == 0.0

    def test_branin_known_minimum(self):
        func = builtin_functions(2)["branin"]
        assert func.fn(np.array([math.pi, 2.275])) == pytest.approx(0.397887, abs=1e-6)

    def test_michalewicz_dense_grid_oracle(self):
        # Dense 2000x2000 grid plus local refinement recovers the stored
        # optimum before it is trusted as ground truth.
        func = builtin_functions(2)["michalewicz"]
        g = np.linspace(0.0, math.pi, 2000)
        A, B = np.meshgrid(g, g, indexing="ij")
        X = np.stack([A.ravel(), B.ravel()], axis=1)
        i = np.arange(1, 3)
        vals = -np.sum(np.sin(X) * np.sin(i * X**2 / math.pi) ** 20, axis=1)
        k = int(np.argmin(vals))
        res = minimize(func.fn, X[k], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14})
        assert res.fun == pytest.approx(func.optimum_f, abs=1e-9)
        assert res.fun == pytest.approx(-1.8013, abs=1e-4)
        np.testing.assert_allclose(res.x, func.optimum_x, atol=1e-5)

    def test_every_stored_optimum_consistent(self):
        for func in builtin_functions(2).values():
            assert abs(func.fn(np.asarray(func.optimum_x)) - func.optimum_f) <= 1e-6

    def test_constant_function(self):
        func = builtin_functions(2)["constant"]
        assert func.fn(np.array([0.12, 0.99])) == 0.0


def quick_config(**over):
    config = {
        "function": "branin",
        "repetitions": 3,
        "seeds": [0, 1, 2],
        "params": {
            "n_iterations": 6,
            "n_init": 6,
            "inner_budget": 120,
            "learn_budget": 60,
        },
    }
    config.update(over)
    return config


class TestRunBenchmark:
    def test_ten_seeds_give_ten_traces_and_summary(self, tmp_path):
        config = quick_config(repetitions=10, seeds=list(range(10)))
        config["params"]["n_iterations"] = 3
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        out = tmp_path / "out"
        assert run_benchmark(config_path, out) == 0
        traces = sorted(out.glob("trace_seed*.csv"))
        assert len(traces) == 10
        summary = json.loads((out / "summary.json").read_text())
        assert summary["function"] == "branin"
        assert len(summary["final_gaps"]) == 10

    def test_summary_median_matches_trace_recomputation(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(quick_config()))
        out = tmp_path / "out"
        assert run_benchmark(config_path, out) == 0
        summary = json.loads((out / "summary.json").read_text())
        gaps = []
        for seed in summary["seeds"]:
            trace = read_trace(out / f"trace_seed{seed}.csv")
            gaps.append(trace.records[-1].gap)
        assert summary["median_final_gap"] == pytest.approx(float(np.median(gaps)))

    def test_malformed_config_exits_1(self, tmp_path):
        config_path = tmp_path / "bad.json"
        config_path.write_text("{not json")
        assert run_benchmark(config_path, tmp_path / "out") == 1

    def test_unknown_function_exits_1(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(quick_config(function="nope")))
        assert run_benchmark(config_path, tmp_path / "out") == 1

    def test_unknown_param_key_exits_1(self, tmp_path):
        config = quick_config()
        config["params"]["mystery"] = 1
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        assert run_benchmark(config_path, tmp_path / "out") == 1

    def test_bench_seed_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BENCH_SEED", "100")
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(quick_config(repetitions=2, seeds=[0, 1])))
        out = tmp_path / "out"
        assert run_benchmark(config_path, out) == 0
        assert (out / "trace_seed100.csv").exists()
        assert (out / "trace_seed101.csv").exists()


class TestTraceRoundTrip:
    def test_write_read_identity(self, tmp_path):
        from bayopt.optimizer import BoptParams, TargetProblem, run_continuous

        params = BoptParams.from_dict({
            "n_iterations": 4, "n_init": 5, "inner_budget": 100,
            "learn_budget": 60,
            "bounds": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        })
        problem = TargetProblem(
            evaluate=lambda x: float(np.sum((x - 0.4) ** 2)),
            known_optimum=(np.full(2, 0.4), 0.0))
        _, _, trace = run_continuous(problem, params)
        path = tmp_path / "trace.csv"
        write_trace(trace, path)
        again = read_trace(path)
        assert len(again.records) == len(trace.records)
        for a, b in zip(trace.records, again.records):
            assert a.iteration == b.iteration
            np.testing.assert_array_equal(a.x, b.x)
            assert a.y == b.y
            assert a.incumbent_y == b.incumbent_y
            assert a.gap == b.gap
            assert a.avg_regret == b.avg_regret
            assert a.t_fit_ms == b.t_fit_ms
            assert a.t_crit_ms == b.t_crit_ms


class TestRunTiming:
    def test_small_run_logs_all_iterations(self, tmp_path):
        out = tmp_path / "timing.csv"
        rows = run_timing([20], out)
        assert len(rows) == 20
        with open(out, newline="") as fh:
            parsed = list(csv.DictReader(fh))
        assert len(parsed) == 20
        assert {"run_iters", "iteration", "n_points", "t_fit_ms",
                "t_crit_ms", "run_total_s"} <= set(parsed[0])
        assert all(float(row["t_fit_ms"]) >= 0.0 for row in parsed)


class TestCLI:
    def test_list(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        for name in ("ackley", "branin", "michalewicz", "rosenbrock", "constant"):
            assert name in out

    def test_run_subcommand(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(quick_config(repetitions=1, seeds=[4])))
        out = tmp_path / "out"
        assert main(["run", "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "summary.json").exists()

    def test_time_subcommand(self, tmp_path):
        out = tmp_path / "timing.csv"
        assert main(["time", "--iters", "12", "--out", str(out)]) == 0
        assert out.exists()

    def test_time_bad_iters(self, tmp_path):
        assert main(["time", "--iters", "abc", "--out", str(tmp_path / "x.csv")]) == 1
