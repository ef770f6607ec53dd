import json

import numpy as np
import pytest

from coxbo.cli import (
    ExperimentConfig,
    cmd_bo,
    cmd_fit,
    cmd_metrics,
    cmd_synth,
    ingest_events,
    main,
    parse_config_text,
)
from coxbo.errors import InputError, ParseError
from coxbo.pointprocess import (
    integrated_intensity,
    synthetic_intensity_fn,
    thinning_sample,
)

RESULT_KEYS = {"config", "grid", "mean", "std", "metrics", "trace", "timing_seconds"}


class TestConfigParsing:
    def test_flat_keys_and_comments(self):
        cfg = parse_config_text(
            """
            # experiment
            synthetic = 1
            link = quadratic
            gamma = 0.5
            grid_points = 50
            initial_centers = 10 ; 30
            """
        )
        assert cfg.synthetic == 1
        assert cfg.gamma == 0.5
        assert cfg.grid_points == (50,)
        assert cfg.initial_centers == ((10.0,), (30.0,))

    def test_unknown_key_rejected(self):
        with pytest.raises(InputError):
            parse_config_text("mystery = 1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(InputError):
            parse_config_text("seed = 1\nseed = 2\n")

    def test_malformed_line(self):
        with pytest.raises(ParseError):
            parse_config_text("seed 1\n")
        with pytest.raises(ParseError):
            parse_config_text("seed = one\n")

    def test_vector_values(self):
        cfg = parse_config_text("domain_lower = 0 0\ndomain_upper = 1 2\n")
        assert cfg.domain_lower == (0.0, 0.0)
        assert cfg.domain_upper == (1.0, 2.0)


class TestIngest:
    def test_single_column(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1.0\n2.0\n")
        es = ingest_events(p)
        assert es.n == 2 and es.dim == 1

    def test_header_skipped(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("lon,lat\n1.0,2.0\n3.0,4.0\n")
        es = ingest_events(p)
        assert es.n == 2 and es.dim == 2

    def test_malformed_row_cites_line(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("a,b\n")
        with pytest.raises(ParseError, match="line 1"):
            ingest_events(p)
        p.write_text("1.0\nx\n")
        with pytest.raises(ParseError, match="line 2"):
            ingest_events(p)

    def test_column_count_mismatch(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1.0,2.0\n3.0\n")
        with pytest.raises(ParseError, match="line 2"):
            ingest_events(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(InputError):
            ingest_events(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            ingest_events(tmp_path / "missing.csv")

    def test_domain_padding(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("0.0\n10.0\n")
        es = ingest_events(p)
        assert es.domain_lower[0] == pytest.approx(-0.1)
        assert es.domain_upper[0] == pytest.approx(10.1)


class TestSynth:
    def test_round_trip_exact(self, tmp_path):
        out = tmp_path / "events.csv"
        cfg = ExperimentConfig(synthetic=2, seed=3)
        cmd_synth(cfg, out)
        es = ingest_events(out, domain_lower=[0.0], domain_upper=[5.0])
        reference = thinning_sample(synthetic_intensity_fn(2), 3)
        np.testing.assert_array_equal(es.events, reference.events)

    def test_mean_count_matches_quadrature(self, tmp_path):
        # numeric integral oracle over 500 seeded runs of the command
        fn = synthetic_intensity_fn(2)
        expected = integrated_intensity(fn, fn.lower, fn.upper, 4096)
        counts = []
        out = tmp_path / "ev.csv"
        for seed in range(500):
            rec = cmd_synth(ExperimentConfig(synthetic=2, seed=seed), out)
            counts.append(rec["events_written"])
        sigma_mean = np.sqrt(expected / 500)
        assert abs(np.mean(counts) - expected) <= 3 * sigma_mean

    def test_requires_synthetic(self, tmp_path):
        with pytest.raises(InputError):
            cmd_synth(ExperimentConfig(), tmp_path / "x.csv")


class TestFit:
    def test_synthetic_replicate_metrics(self, tmp_path):
        out = tmp_path / "fit.json"
        cfg = ExperimentConfig(synthetic=1, seed=0, max_iters=800)
        record = cmd_fit(cfg, out)
        assert set(record) == RESULT_KEYS
        for key in ("l2", "iql50", "iql85"):
            assert np.isfinite(record["metrics"][key])
        on_disk = json.loads(out.read_text())
        assert set(on_disk) == RESULT_KEYS
        assert len(on_disk["mean"]) == len(on_disk["grid"]) == len(on_disk["std"])

    def test_replicates_report_median(self, tmp_path):
        out = tmp_path / "fit.json"
        cfg = ExperimentConfig(synthetic=2, seed=1, replicates=3, max_iters=500)
        record = cmd_fit(cfg, out)
        reps = record["metrics"]["replicates"]
        assert len(reps) == 3
        assert record["metrics"]["l2"] == pytest.approx(np.median([r["l2"] for r in reps]))

    def test_curve_csv_written(self, tmp_path):
        out = tmp_path / "fit.json"
        curve = tmp_path / "curve.csv"
        cfg = ExperimentConfig(synthetic=1, seed=0, max_iters=300, curve_out=str(curve))
        cmd_fit(cfg, out)
        lines = curve.read_text().strip().splitlines()
        assert lines[0] == "x1,mean,std"
        assert len(lines) == 101

    def test_dataset_csv_fit(self, tmp_path):
        data = tmp_path / "events.csv"
        rng = np.random.default_rng(0)
        data.write_text("\n".join(f"{v:.17g}" for v in rng.uniform(0, 10, 40)) + "\n")
        out = tmp_path / "fit.json"
        cfg = ExperimentConfig(dataset=str(data), max_iters=300, grid_points=(30,))
        record = cmd_fit(cfg, out)
        assert record["metrics"] is None
        assert len(record["mean"]) == 30


class TestDeterminism:
    def _normalized(self, path):
        record = json.loads(path.read_text())
        record["timing_seconds"] = 0.0
        if record.get("trace"):
            for step in record["trace"]["steps"]:
                step["duration_seconds"] = 0.0
        return json.dumps(record, sort_keys=True)

    def test_fit_byte_identical(self, tmp_path):
        cfg = ExperimentConfig(synthetic=1, seed=4, max_iters=400)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        cmd_fit(cfg, a)
        cmd_fit(cfg, b)
        assert self._normalized(a) == self._normalized(b)

    def test_bo_byte_identical(self, tmp_path):
        cfg = ExperimentConfig(
            synthetic=1,
            seed=2,
            budget=3,
            region_radius=4.0,
            initial_centers=((10.0,), (40.0,)),
            max_iters=300,
            grid_points=(50,),
        )
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        cmd_bo(cfg, a)
        cmd_bo(cfg, b)
        assert self._normalized(a) == self._normalized(b)


class TestBOCommand:
    def test_budget_records_and_trace_file(self, tmp_path):
        out = tmp_path / "bo.json"
        cfg = ExperimentConfig(
            synthetic=1,
            seed=0,
            budget=3,
            region_radius=4.0,
            initial_centers=((10.0,), (40.0,)),
            max_iters=300,
            grid_points=(50,),
        )
        record = cmd_bo(cfg, out)
        assert set(record) == RESULT_KEYS
        assert len(record["trace"]["steps"]) == 3
        trace_path = tmp_path / "bo.trace.json"
        assert trace_path.exists()
        full = json.loads(trace_path.read_text())
        assert len(full["steps"]) == 3
        assert len(full["steps"][0]["mean_intensity"]) == 50

    def test_requires_initial_centers(self, tmp_path):
        with pytest.raises(InputError):
            cmd_bo(ExperimentConfig(synthetic=1), tmp_path / "bo.json")


class TestMetricsCommand:
    def test_scores_saved_curve(self, tmp_path):
        curve = tmp_path / "curve.csv"
        fit_out = tmp_path / "fit.json"
        cfg = ExperimentConfig(synthetic=1, seed=0, max_iters=400, curve_out=str(curve))
        fit_record = cmd_fit(cfg, fit_out)
        mcfg = ExperimentConfig(synthetic=1, estimate=str(curve))
        record = cmd_metrics(mcfg, tmp_path / "metrics.json")
        assert record["metrics"]["l2"] == pytest.approx(fit_record["metrics"]["l2"], rel=1e-12)

    def test_requires_estimate(self, tmp_path):
        with pytest.raises(InputError):
            cmd_metrics(ExperimentConfig(synthetic=1), tmp_path / "m.json")


class TestMainEntry:
    def test_fit_exit_zero(self, tmp_path, capsys):
        config = tmp_path / "exp.cfg"
        config.write_text("synthetic = 1\nmax_iters = 300\n")
        out = tmp_path / "result.json"
        code = main(["fit", "--config", str(config), "--seed", "9", "--out", str(out)])
        assert code == 0
        assert out.exists()
        record = json.loads(out.read_text())
        assert record["config"]["seed"] == 9

    def test_error_exit_nonzero_with_category(self, tmp_path, capsys):
        config = tmp_path / "exp.cfg"
        config.write_text("synthetic = 7\n")
        code = main(["fit", "--config", str(config), "--out", str(tmp_path / "r.json")])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error[")

    def test_parse_error_category(self, tmp_path, capsys):
        config = tmp_path / "exp.cfg"
        config.write_text("nonsense_key = 1\n")
        code = main(["fit", "--config", str(config), "--out", str(tmp_path / "r.json")])
        assert code == 1
        assert "error[input]" in capsys.readouterr().err

    def test_synth_subcommand(self, tmp_path):
        config = tmp_path / "exp.cfg"
        config.write_text("synthetic = 2\nseed = 0\n")
        out = tmp_path / "ev.csv"
        code = main(["synth", "--config", str(config), "--out", str(out)])
        assert code == 0
        assert ingest_events(out).n > 0

    def test_replicates_override(self, tmp_path):
        config = tmp_path / "exp.cfg"
        config.write_text("synthetic = 2\nmax_iters = 300\n")
        out = tmp_path / "r.json"
        code = main(
            ["fit", "--config", str(config), "--replicates", "2", "--out", str(out)]
        )
        assert code == 0
        record = json.loads(out.read_text())
        assert len(record["metrics"]["replicates"]) == 2


def test_missing_config_file_errors_cleanly(tmp_path, capsys):
    code = main(["fit", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "o.json")])
    assert code == 1
    assert "error[input]" in capsys.readouterr().err
