import json

import numpy as np
import pytest

from mtbai.cli import main
from mtbai.harness import SeriesPoint, emit_outputs
from mtbai.plotting import band_by_round, moving_average, plot_series
from mtbai.harness import read_series_csv

EASY = {"X": 2, "G": 2, "H": 2,
        "mu": [[[0.8, 0.5], [0.3, 0.2]], [[0.7, 0.2], [0.5, 0.4]]]}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"instance": EASY, "runs": 2, "seed": 3}))
    return p


class TestCommands:
    def test_oracle(self, config, capsys):
        assert main(["oracle", "--config", str(config), "--sigma", "1e4"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"q_star", "rho_star", "c_sigma", "k_g", "k_h", "iterations", "converged"}
        assert np.asarray(out["q_star"]).shape == (2, 2, 2)

    def test_simulate_summarize_plot(self, config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config), "--runs", "2", "--algo", "osrl",
                     "--series", "--out", str(out)]) == 0
        for name in ("runs.csv", "alloc.csv", "series.csv", "summary.csv", "summary.json"):
            assert (out / name).exists()
        capsys.readouterr()
        assert main(["summarize", "--in", str(out / "runs.csv"), "--format", "markdown"]) == 0
        assert "phase1" in capsys.readouterr().out
        svg = tmp_path / "c.svg"
        assert main(["plot", "--in", str(out / "series.csv"), "--column", "c_sigma_inv",
                     "--out", str(svg), "--window", "3"]) == 0
        assert svg.read_text().lstrip().startswith("<?xml")

    def test_config_error_exit(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"instance": EASY, "bogus": 1}))
        assert main(["oracle", "--config", str(p)]) == 2
        assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2

    def test_runtime_error_exit(self, config, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["simulate", "--config", str(config), "--runs", "1", "--algo", "osrl",
                     "--out", str(blocker / "sub")]) == 3

    def test_unknown_column(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["plot", "--in", "x.csv", "--column", "nope", "--out", "y.svg"])
        assert exc.value.code == 2


class TestPlotting:
    def test_constant_column(self, tmp_path):
        pts = [SeriesPoint(r, t, 1.0, 0.5, 0.25, 0.1, 0.1) for r in range(3) for t in (12, 24, 36)]
        emit_outputs([], pts, tmp_path)
        ts, mean, lo, hi = band_by_round(read_series_csv(tmp_path / "series.csv"), "c_sigma_inv")
        assert ts.tolist() == [12, 24, 36]
        assert np.all(mean == 0.25) and np.all(lo == hi)
        plot_series(tmp_path / "series.csv", tmp_path / "p.svg", "c_sigma_inv")
        assert (tmp_path / "p.svg").stat().st_size > 0

    def test_empty_series(self, tmp_path):
        emit_outputs([], [], tmp_path)
        out = plot_series(tmp_path / "series.csv", tmp_path / "e.svg", "mu_hat_l2")
        assert "<svg" in out.read_text()

    def test_moving_average(self):
        y = np.array([0.0, 3.0, 0.0, 3.0])
        assert moving_average(y, 1).tolist() == y.tolist()
        assert moving_average(y, 3)[1] == pytest.approx(1.0)
