import json
from pathlib import Path

import numpy as np
import pytest

from panelsynth.cli import main
from panelsynth.harness import (
    InputError,
    RunManifest,
    ingest_csv,
    run_experiment,
    simulate_dataset,
)
from panelsynth.queries import QuerySpec, parse_queries


class TestIngestCsv:
    def test_plain_binary_csv(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("0,1\n1,1\n0,0\n")
        ds, dropped = ingest_csv(path)
        assert (ds.n, ds.t_max, dropped) == (3, 2, 0)

    def test_threshold_binarization(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("0.8,1.2\n2.0,0.5\n")
        ds, _ = ingest_csv(path, threshold=1.0)
        assert ds.matrix().tolist() == [[1, 0], [0, 1]]

    def test_missing_cell_drops_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,0\n1,\n0,1\n")
        ds, dropped = ingest_csv(path)
        assert ds.n == 2 and dropped == 1

    def test_header_skipped(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("m1,m2\n1,0\n0,1\n")
        ds, _ = ingest_csv(path, header=True)
        assert ds.n == 2

    def test_non_rectangular_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,0\n1,0,1\n")
        with pytest.raises(InputError, match="columns"):
            ingest_csv(path)

    def test_no_rows_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(",\n")
        with pytest.raises(InputError, match="no usable rows"):
            ingest_csv(path)

    def test_non_binary_without_threshold_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,2\n0,1\n")
        with pytest.raises(InputError, match="0/1"):
            ingest_csv(path)


class TestSimulate:
    def test_all_ones(self):
        ds = simulate_dataset("all_ones", 5, 3)
        assert ds.matrix().sum() == 15

    def test_bernoulli_zero_rate(self):
        ds = simulate_dataset("bernoulli", 6, 4, np.random.default_rng(0), p=0.0)
        assert ds.matrix().sum() == 0

    def test_deterministic_for_seed(self):
        a = simulate_dataset("markov", 40, 6, np.random.default_rng(5))
        b = simulate_dataset("markov", 40, 6, np.random.default_rng(5))
        assert (a.matrix() == b.matrix()).all()

    def test_markov_persistence(self):
        ds = simulate_dataset("markov", 4000, 2, np.random.default_rng(1),
                              p0=0.5, stay=1.0, enter=0.0)
        bits = ds.matrix()
        assert (bits[:, 0] == bits[:, 1]).all()

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            simulate_dataset("weather", 5, 3)


def _window_manifest(out_dir, **overrides):
    base = dict(
        mode="window",
        T=6,
        k=2,
        rho=0.05,
        beta_target=0.05,
        reps=6,
        seed=424,
        out_dir=str(out_dir),
        queries=parse_queries('[{"kind":"window","s":"11","t":[2,4,6]},{"kind":"cum","b":1,"t":6}]'),
        force_window=True,
        sim_kind="bernoulli",
        n=120,
        sim_params={"p": 0.3},
    )
    base.update(overrides)
    return RunManifest(**base)


class TestRunExperiment:
    def test_noiseless_answers_equal_truth(self, tmp_path):
        man = _window_manifest(
            tmp_path, noiseless=True, rho=0.0,
            queries=parse_queries('[{"kind":"window","s":"11","t":[2,4,6]}]'),
            force_window=False,
        )
        result = run_experiment(man)
        assert not result.failures
        for row in result.answers:
            assert np.allclose(row, result.truth)

    def test_unsupported_queries_need_force(self, tmp_path):
        man = _window_manifest(tmp_path, force_window=False)
        with pytest.raises(InputError, match="not preserved"):
            run_experiment(man)

    def test_output_bundle_written(self, tmp_path):
        result = run_experiment(_window_manifest(tmp_path))
        for name in ("answers.csv", "summary.csv", "errors.csv", "failures.csv", "metadata.json"):
            assert (result.out_dir / name).exists()
        meta = json.loads((result.out_dir / "metadata.json").read_text())
        assert meta["schema"] == 1
        for key in ("n_pad", "k", "T", "rho", "beta_target", "seed"):
            assert meta[key] is not None
        assert meta["unsupported_queries"] == ["cum:1"]
        assert meta["data"]["n"] == 120

    def test_summary_has_percentiles(self, tmp_path):
        result = run_experiment(_window_manifest(tmp_path))
        row = result.summary_rows[0]
        for key in ("truth", "mean", "std", "p2_5", "median", "p97_5", "supported"):
            assert key in row

    def test_cumulative_mode(self, tmp_path):
        man = RunManifest(
            mode="cumulative", T=5, rho=0.2, reps=4, seed=7, out_dir=str(tmp_path),
            queries=parse_queries('[{"kind":"cum","b":2,"t":[3,5]}]'),
            sim_kind="bernoulli", n=80, sim_params={"p": 0.4},
        )
        result = run_experiment(man)
        assert result.answers.shape == (4, 2)
        meta = json.loads((result.out_dir / "metadata.json").read_text())
        assert len(meta["schedule"]) == 5
        assert meta["counter_kind"] == "tree"

    def test_byte_identical_reruns(self, tmp_path):
        res_a = run_experiment(_window_manifest(tmp_path / "a"))
        res_b = run_experiment(_window_manifest(tmp_path / "b"))
        for name in ("answers.csv", "summary.csv", "errors.csv", "failures.csv"):
            assert (res_a.out_dir / name).read_bytes() == (res_b.out_dir / name).read_bytes()
        meta_a = json.loads((res_a.out_dir / "metadata.json").read_text())
        meta_b = json.loads((res_b.out_dir / "metadata.json").read_text())
        meta_a.pop("wall_time_s"), meta_b.pop("wall_time_s")
        assert meta_a == meta_b

    def test_workers_do_not_change_results(self, tmp_path):
        serial = run_experiment(_window_manifest(tmp_path / "s", workers=1))
        parallel = run_experiment(_window_manifest(tmp_path / "p", workers=2))
        assert (serial.out_dir / "answers.csv").read_bytes() == (
            parallel.out_dir / "answers.csv"
        ).read_bytes()

    def test_failures_logged_not_fatal(self, tmp_path):
        man = _window_manifest(tmp_path, n_pad=0, rho=1e-4, reps=5, n=10,
                               queries=parse_queries('[{"kind":"window","s":"11","t":6}]'),
                               force_window=False)
        result = run_experiment(man)
        assert result.failures
        lines = (result.out_dir / "failures.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + len(result.failures)

    def test_save_synth_writes_matrix(self, tmp_path):
        result = run_experiment(_window_manifest(tmp_path, save_synth=1))
        saved = np.loadtxt(result.out_dir / "synth_rep0.csv", delimiter=",", dtype=int)
        assert saved.shape[1] == 6
        assert set(np.unique(saved)) <= {0, 1}

    def test_data_shorter_than_horizon_rejected(self, tmp_path):
        data = tmp_path / "short.csv"
        data.write_text("1,0\n0,1\n")
        man = _window_manifest(tmp_path, sim_kind=None, n=None, sim_params={},
                               data_path=str(data))
        with pytest.raises(InputError, match="horizon"):
            run_experiment(man)


class TestCli:
    def test_simulate_then_synth_and_eval(self, tmp_path, capsys):
        data = tmp_path / "data.csv"
        rc = main(["simulate", "--kind", "bernoulli", "--n", "60", "--T", "6",
                   "--p", "0.4", "--seed", "3", "--out", str(data)])
        assert rc == 0
        queries = tmp_path / "q.json"
        queries.write_text('[{"kind":"window","s":"11","t":[2,4,6]}]')
        out = tmp_path / "run"
        rc = main(["synth-window", "--data", str(data), "--T", "6", "--k", "2",
                   "--rho", "0.1", "--beta-target", "0.05", "--reps", "3",
                   "--seed", "11", "--out", str(out), "--queries", str(queries)])
        assert rc == 0
        assert (out / "metadata.json").exists()
        rc = main(["eval", "--data", str(data), "--queries", str(queries)])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[-4] == "query,t,value" or "query,t,value" in lines

    def test_synth_cumulative_subcommand(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["synth-cumulative", "--sim-kind", "bernoulli", "--n", "50",
                   "--p", "0.3", "--T", "4", "--rho", "0.2", "--reps", "2",
                   "--seed", "5", "--out", str(out),
                   "--queries", '[{"kind":"cum","b":1,"t":4}]'])
        assert rc == 0

    def test_bound_subcommand(self, capsys):
        rc = main(["bound", "--mode", "window", "--T", "12", "--k", "3",
                   "--rho", "0.005", "--beta", "0.05", "--beta-target", "0.05"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_pad"] == 122
        assert payload["max_additive_error_bound"] == pytest.approx(123.3929, abs=5e-4)

    def test_bound_cumulative(self, capsys):
        rc = main(["bound", "--mode", "cumulative", "--T", "12", "--rho", "0.005",
                   "--beta", "0.05", "--n", "23374"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["schedule"]) == 12
        assert payload["beta_star"] == pytest.approx(0.6)

    def test_input_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n")
        rc = main(["eval", "--data", str(bad), "--queries", '[{"kind":"cum","b":1,"t":1}]'])
        assert rc == 2

    def test_missing_file_exit_code(self, tmp_path):
        rc = main(["eval", "--data", str(tmp_path / "nope.csv"),
                   "--queries", '[{"kind":"cum","b":1,"t":1}]'])
        assert rc == 2

    def test_all_failed_exit_code(self, tmp_path):
        rc = main(["synth-window", "--sim-kind", "bernoulli", "--n", "10", "--T", "8",
                   "--k", "2", "--rho", "0.0001", "--n-pad", "0", "--reps", "3",
                   "--seed", "1", "--out", str(tmp_path / "run")])
        assert rc == 3

    def test_unsupported_window_eval_guard(self, tmp_path, capsys):
        data = tmp_path / "d.csv"
        data.write_text("1,1,1,1\n0,0,0,0\n")
        rc = main(["eval", "--data", str(data), "--window-limit", "2",
                   "--queries", '[{"kind":"window","s":"111","t":4}]'])
        assert rc == 2
        rc = main(["eval", "--data", str(data), "--window-limit", "2", "--force-window",
                   "--queries", '[{"kind":"window","s":"111","t":4}]'])
        assert rc == 0
