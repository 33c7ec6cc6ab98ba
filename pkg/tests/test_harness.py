import csv
import json
import math

import numpy as np
import pytest

from mtbai.errors import ConfigError
from mtbai.harness import (ALLOC_COLUMNS, CI_MULTIPLIER, RUN_COLUMNS, ExperimentConfig, RunRecord,
                           config_from_dict, emit_outputs, format_summary, load_config,
                           read_runs_csv, read_series_csv, run_experiment, summarize)
from mtbai.model import ModelTensor

EASY = {"X": 2, "G": 2, "H": 2,
        "mu": [[[0.8, 0.5], [0.3, 0.2]], [[0.7, 0.2], [0.5, 0.4]]]}
DETERMINISTIC = {"X": 2, "G": 2, "H": 2,
                 "mu": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [0.0, 0.0]]]}


def cfg(**kw):
    base = {"instance": EASY, "runs": 3, "seed": 10}
    base.update(kw)
    return config_from_dict(base)


def record(algo, tau_g, tau_h=0, delta=0.1):
    return RunRecord(0, 0, algo, delta, delta, tau_g, tau_h, tau_g + tau_h, 0, True, True, 0.0)


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"instance": EASY, "deltaG": 0.1})

    def test_unknown_solver_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"instance": EASY, "solver": {"iters": 3}})

    @pytest.mark.parametrize("kw", [{"delta_g": 1.0}, {"runs": 0}, {"algo": "x"},
                                    {"tas_task_mode": "all"}, {"sigma": -1.0}])
    def test_invalid_values(self, kw):
        with pytest.raises(ConfigError):
            cfg(**kw)

    def test_outside_class(self):
        bad = {"X": 1, "G": 2, "H": 1, "mu": [[[0.5], [0.5]]]}
        with pytest.raises(ConfigError):
            config_from_dict({"instance": bad})

    def test_instance_path(self, tmp_path):
        (tmp_path / "inst.json").write_text(json.dumps(EASY))
        (tmp_path / "c.json").write_text(json.dumps({"instance": "inst.json", "runs": 2}))
        c = load_config(tmp_path / "c.json")
        assert c.runs == 2 and c.instance.means.shape == (2, 2, 2)

    def test_missing_instance_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"instance": "nope.json"}))
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.json")


class TestRunExperiment:
    def test_deterministic_instance(self):
        res = run_experiment(config_from_dict({"instance": DETERMINISTIC, "runs": 1, "algo": "osrl"}))
        (r,) = res.records
        assert r.g_correct and r.h_all_correct
        assert r.tau_g < 500

    def test_records(self):
        res = run_experiment(cfg(log_series=True))
        assert len(res.records) == 6 and not res.failures
        for r in res.records:
            if r.algo == "osrl":
                assert r.tau_total == r.tau_g + r.tau_h
                assert r.counts.sum() == r.tau_g
            else:
                assert r.counts.sum() == r.tau_total
        for run_id in range(3):
            t = [s.t for s in res.series if s.run_id == run_id]
            assert t and all(b > a for a, b in zip(t, t[1:]))

    def test_byte_identical(self, tmp_path):
        for d in ("a", "b"):
            res = run_experiment(cfg())
            emit_outputs(res.records, res.series, tmp_path / d, res.failures)
        for name in ("runs.csv", "alloc.csv", "summary.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_parallel_matches_serial(self):
        a = run_experiment(cfg(runs=4))
        b = run_experiment(cfg(runs=4, threads=2))
        assert [r.row() for r in a.records] == [r.row() for r in b.records]

    def test_failures_counted(self):
        res = run_experiment(cfg(max_rounds=5, algo="osrl"))
        assert not res.records and len(res.failures) == 3
        assert "cap" in res.failures[0].reason


class TestSummarize:
    def test_constant(self):
        (row,) = summarize([record("tas", 100) for _ in range(4)])
        assert (row.mean, row.std, row.half_width, row.n) == (100, 0, 0, 4)

    def test_two_values(self):
        (row,) = summarize([record("tas", 0), record("tas", 2)])
        assert row.mean == 1 and row.std == pytest.approx(math.sqrt(2))
        assert row.half_width == pytest.approx(2.2414)

    def test_multiplier_against_reference_width(self):
        # reference rows: std 6423.03 and 646.46 over 1120 runs
        assert CI_MULTIPLIER * 6423.03 / math.sqrt(1120) == pytest.approx(430.37, abs=0.5)
        assert CI_MULTIPLIER * 646.46 / math.sqrt(1120) == pytest.approx(43.31, abs=0.05)

    def test_groups_and_identity(self):
        rng = np.random.default_rng(0)
        recs = [record("osrl", int(g), int(h)) for g, h in rng.integers(100, 1000, size=(10, 2))]
        recs += [record("osrl", 50, 50, delta=0.05)]
        with pytest.warns(UserWarning):
            rows = summarize(recs)
        by = {(r.phase, r.delta): r for r in rows}
        assert set(by) == {("phase1", 0.1), ("phase2", 0.1), ("total", 0.1)}
        assert by["total", 0.1].mean == pytest.approx(by["phase1", 0.1].mean + by["phase2", 0.1].mean)

    def test_formats(self):
        rows = summarize([record("tas", 0), record("tas", 2)])
        assert json.loads(format_summary(rows, "json"))[0]["mean"] == 1
        assert format_summary(rows, "markdown").startswith("| algo")
        assert format_summary(rows, "csv").splitlines()[1].startswith("tas,total,0.1,2,1.0")


class TestOutputs:
    def test_zero_runs(self, tmp_path):
        emit_outputs([], [], tmp_path)
        assert (tmp_path / "runs.csv").read_text() == ",".join(RUN_COLUMNS) + "\n"
        assert (tmp_path / "alloc.csv").read_text() == ",".join(ALLOC_COLUMNS) + "\n"
        assert json.loads((tmp_path / "summary.json").read_text()) == []

    def test_roundtrip(self, tmp_path):
        res = run_experiment(cfg(runs=2, log_series=True))
        emit_outputs(res.records, res.series, tmp_path)
        with open(tmp_path / "runs.csv", newline="") as fh:
            rows = list(csv.reader(fh, strict=True))
        assert rows[0] == RUN_COLUMNS and len(rows) == 5
        back = read_runs_csv(tmp_path / "runs.csv")
        assert [r.row() for r in back] == [r.row() for r in res.records]
        with open(tmp_path / "alloc.csv") as fh:
            assert sum(1 for _ in fh) - 1 == len(res.records) * 8
        assert len(read_series_csv(tmp_path / "series.csv")) == len(res.series)

    def test_float_format(self, tmp_path):
        r = record("tas", 5)
        r.delta_g = 0.1 + 0.2
        emit_outputs([r], [], tmp_path)
        assert "0.30000000000000004" in (tmp_path / "runs.csv").read_text()

    def test_bad_header(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError):
            read_runs_csv(tmp_path / "x.csv")
