from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from dimple import bench
from dimple.bench import (
    RESULT_COLUMNS,
    SUMMARY_COLUMNS,
    ExperimentGrid,
    ResultRow,
    Sweep,
    read_results,
    read_summary,
    run_cell,
    run_grid,
    summarize,
)
from dimple.errors import ConfigError, InfeasibleModelError
from dimple.netgen import DirichletFirstK, ModelConfig

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def tiny_grid(**overrides) -> ExperimentGrid:
    params = dict(
        sweeps=(Sweep("n", (40,), (30,)),),
        b_ranges=((-0.3, 0.3),),
        M=2,
        K=2,
        replications=2,
        name="tiny",
    )
    params.update(overrides)
    return ExperimentGrid(**params)


def csv_rows(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


class TestGrid:
    def test_cells_and_ids(self):
        grid = tiny_grid(
            sweeps=(Sweep("n", (40, 50), (30,)), Sweep("L", (20,), (40, 60))),
            b_ranges=((-0.3, 0.3), (-0.1, 0.1)),
        )
        cells = grid.cells()
        assert len(cells) == 2 * (2 + 2)
        assert [(c.n, c.L) for c in cells[:4]] == [(40, 30), (50, 30), (40, 20), (60, 20)]
        assert cells[0].cell_id == "truncated_normal_c-0.3000_d+0.3000_varyn_n40_L30"
        assert len({c.cell_id for c in cells}) == len(cells)

    def test_from_dict(self):
        grid = ExperimentGrid.from_dict(
            {
                "name": "mixed",
                "sweeps": [{"vary": "L", "values": [20, 40], "fixed": [50]}],
                "latents": [{"name": "dirichlet", "alpha": 0.2}],
                "b_ranges": [[-0.1, 0.1]],
                "algorithms": ["tensor"],
                "replications": 3,
            }
        )
        assert grid.latents == (DirichletFirstK(alpha=0.2),)
        assert grid.algorithms == ("tensor",)
        assert grid.model(grid.cells()[0]) == ModelConfig.uniform(
            50, 20, 3, 3, latent=DirichletFirstK(alpha=0.2), b_range=(-0.1, 0.1)
        )

    @pytest.mark.parametrize(
        "data",
        [
            {"sweeps": [{"vary": "n", "values": [10], "fixed": [5]}], "colour": "red"},
            {"sweeps": [{"vary": "M", "values": [10], "fixed": [5]}]},
            {"sweeps": [{"vary": "n", "values": [], "fixed": [5]}]},
            {"sweeps": [{"vary": "n", "values": [10], "fixed": [5]}], "algorithms": ["spectral"]},
            {"sweeps": [{"vary": "n", "values": [10], "fixed": [5]}], "threshold": "median"},
            {"sweeps": [{"vary": "n", "values": [10], "fixed": [5]}], "replications": 0},
            {},
        ],
    )
    def test_invalid(self, data):
        with pytest.raises(ConfigError):
            ExperimentGrid.from_dict(data)

    def test_from_json_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentGrid.from_json(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            ExperimentGrid.from_json(bad)
        listed = tmp_path / "list.json"
        listed.write_text("[]", encoding="utf-8")
        with pytest.raises(ConfigError):
            ExperimentGrid.from_json(listed)

    def test_overrides_skip_none(self):
        grid = tiny_grid().with_overrides(replications=None, base_seed=9)
        assert grid.replications == 2
        assert grid.base_seed == 9

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.name)
    def test_shipped_configs_load(self, path):
        grid = ExperimentGrid.from_json(path)
        assert grid.cells()
        assert json.loads(path.read_text(encoding="utf-8"))["name"] == grid.name


class TestRunCell:
    def test_rows_per_algorithm(self):
        model = ModelConfig.uniform(40, 30, 2, 2, b_range=(-0.3, 0.3))
        rows = run_cell(model, ("tensor", "tensor_init", "baseline"), seed=4, replication=1, sweep="n")
        assert [r.algorithm for r in rows] == ["tensor", "tensor_init", "baseline"]
        for row in rows:
            assert row.error == ""
            assert 0.0 <= row.r_bl <= 1.0
            assert (row.n, row.L, row.replication, row.seed) == (40, 30, 1, 4)
        assert rows[0].hooi_iters >= 1
        assert rows[1].hooi_iters == 0
        assert rows[0].sin_theta_u is not None and rows[2].sin_theta_u is None

    def test_zero_loadings_give_error_rows(self):
        model = ModelConfig.uniform(30, 10, 2, 2, b_range=(0.0, 0.0))
        rows = run_cell(model, ("tensor", "baseline"), seed=1)
        assert len(rows) == 2
        for row in rows:
            assert row.error
            assert row.r_bl is None

    def test_deterministic(self):
        model = ModelConfig.uniform(40, 30, 2, 2, b_range=(-0.3, 0.3))
        a = run_cell(model, ("tensor", "baseline"), seed=8)
        b = run_cell(model, ("tensor", "baseline"), seed=8)
        assert [r.to_csv() for r in a] == [r.to_csv() for r in b]

    def test_infeasible_model(self):
        model = ModelConfig.uniform(20, 10, 2, 2, b_range=(2.0, 3.0))
        with pytest.raises(InfeasibleModelError):
            run_cell(model, ("tensor",), seed=0)

    def test_sbm_mode(self):
        model = ModelConfig.uniform(40, 30, 2, 3, b_range=(-0.2, 0.2))
        rows = run_cell(model, ("tensor", "baseline"), seed=2, sbm=True)
        assert all(r.error == "" for r in rows)


class TestRunGrid:
    def test_outputs(self, tmp_path):
        report = run_grid(tiny_grid(), tmp_path)
        rows = csv_rows(report.results_path)
        assert len(rows) == 4
        assert tuple(rows[0]) == RESULT_COLUMNS
        assert [(r["replication"], r["algorithm"]) for r in rows] == [
            ("0", "tensor"), ("0", "baseline"), ("1", "tensor"), ("1", "baseline"),
        ]
        assert "wall_time_ms" in csv_rows(report.timings_path)[0]
        assert (tmp_path / "cells" / f"{tiny_grid().cells()[0].cell_id}.csv").exists()
        assert report.rows == 4 and report.error_rows == 0 and report.cells_resumed == 0

    def test_summary_mean_matches_rows(self, tmp_path):
        report = run_grid(tiny_grid(replications=3), tmp_path)
        results = read_results(report.results_path)
        summary = read_summary(report.summary_path)
        assert tuple(summary[0]) == SUMMARY_COLUMNS
        for entry in summary:
            values = [r.r_bl for r in results if r.algorithm == entry["algorithm"]]
            assert int(entry["count"]) == len(values) == 3
            assert float(entry["mean_r_bl"]) == pytest.approx(np.mean(values), abs=1e-9)

    def test_serial_and_threaded_runs_match(self, tmp_path):
        grid = tiny_grid(sweeps=(Sweep("n", (30, 40), (30,)),), replications=3)
        serial = run_grid(grid, tmp_path / "serial", threads=1)
        threaded = run_grid(grid, tmp_path / "threaded", threads=4)
        assert serial.results_path.read_bytes() == threaded.results_path.read_bytes()
        assert serial.summary_path.read_bytes() == threaded.summary_path.read_bytes()

    def test_resume_skips_finished_cells(self, tmp_path, monkeypatch):
        grid = tiny_grid(sweeps=(Sweep("n", (30, 40), (30,)),))
        first = run_grid(grid, tmp_path)
        before = first.results_path.read_bytes()
        first.results_path.unlink()
        (tmp_path / "cells" / f"{grid.cells()[1].cell_id}.csv").unlink()

        calls = []
        original = bench.run_cell

        def counting(model, *args, **kwargs):
            calls.append(model.n)
            return original(model, *args, **kwargs)

        monkeypatch.setattr(bench, "run_cell", counting)
        second = run_grid(grid, tmp_path)
        assert second.cells_resumed == 1
        assert calls == [40, 40]
        assert second.results_path.read_bytes() == before

    def test_changed_grid_discards_checkpoints(self, tmp_path):
        run_grid(tiny_grid(replications=1), tmp_path)
        report = run_grid(tiny_grid(replications=3, base_seed=99), tmp_path)
        assert report.cells_resumed == 0
        rows = read_results(report.results_path)
        assert sorted({r.replication for r in rows}) == [0, 1, 2]
        assert all(r.seed == bench.replication_seed(99, r.n, r.L, r.replication) for r in rows)

    def test_grid_name_does_not_change_fingerprint(self):
        assert tiny_grid(name="a").fingerprint() == tiny_grid(name="b").fingerprint()
        assert tiny_grid().fingerprint() != tiny_grid(M=3).fingerprint()
        assert tiny_grid().fingerprint() != tiny_grid(algorithms=("tensor",)).fingerprint()

    def test_checkpoint_with_foreign_seeds_is_recomputed(self, tmp_path):
        grid = tiny_grid()
        run_grid(grid, tmp_path)
        checkpoint = tmp_path / "cells" / f"{grid.cells()[0].cell_id}.csv"
        rows = read_results(checkpoint)
        for row in rows:
            row.seed += 1
        bench.write_checkpoint(checkpoint, rows)
        report = run_grid(grid, tmp_path)
        assert report.cells_resumed == 0
        assert all(r.seed == bench.replication_seed(0, r.n, r.L, r.replication) for r in read_results(report.results_path))

    def test_no_resume_recomputes(self, tmp_path, monkeypatch):
        run_grid(tiny_grid(), tmp_path)
        calls = []
        original = bench.run_cell
        monkeypatch.setattr(bench, "run_cell", lambda *a, **k: calls.append(1) or original(*a, **k))
        report = run_grid(tiny_grid(), tmp_path, resume=False)
        assert len(calls) == 2
        assert report.cells_resumed == 0

    def test_infeasible_cells_become_error_rows(self, tmp_path):
        report = run_grid(tiny_grid(b_ranges=((2.0, 3.0),)), tmp_path)
        rows = read_results(report.results_path)
        assert report.error_rows == report.rows == 4
        assert all("InfeasibleModelError" in r.error for r in rows)
        summary = read_summary(report.summary_path)
        assert all(entry["mean_r_bl"] == "" and entry["errors"] == "2" for entry in summary)

    def test_bad_thread_count(self, tmp_path):
        with pytest.raises(ConfigError):
            run_grid(tiny_grid(), tmp_path, threads=0)


class TestSummarize:
    def row(self, r_bl, error=""):
        return ResultRow("tensor", "n", "truncated_normal", -0.05, 0.05, 100, 50, 0, 1, r_bl=r_bl, error=error)

    def test_mean_and_stderr(self):
        (entry,) = summarize([self.row(0.0), self.row(0.5), self.row(None, error="RankDeficiencyError: x")])
        assert entry["mean_r_bl"] == pytest.approx(0.25)
        assert entry["stderr_r_bl"] == pytest.approx(0.25)
        assert entry["count"] == 2 and entry["errors"] == 1

    def test_single_row(self):
        (entry,) = summarize([self.row(0.1)])
        assert entry["stderr_r_bl"] == 0.0

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text("algorithm,n\ntensor,10\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_results(path)


@pytest.mark.slow
class TestSparseRegimeTrends:
    """Desk-scale reproduction of the sparse-regime error curves."""

    def mean_r_bl(self, n, L, c, d, algorithm, replications=20):
        model = ModelConfig.uniform(n, L, 3, 3, b_range=(c, d))
        values = []
        for rep in range(replications):
            seed = bench.replication_seed(0, n, L, rep)
            (row,) = run_cell(model, (algorithm,), seed, replication=rep)
            assert row.error == ""
            values.append(row.r_bl)
        return float(np.mean(values))

    def test_more_layers_help(self):
        few = self.mean_r_bl(100, 50, -0.02, 0.02, "tensor")
        many = self.mean_r_bl(100, 350, -0.02, 0.02, "tensor")
        assert many <= few - 0.05

    def test_tensor_beats_baseline(self):
        tensor = self.mean_r_bl(100, 350, -0.02, 0.02, "tensor")
        baseline = self.mean_r_bl(100, 350, -0.02, 0.02, "baseline")
        assert tensor <= baseline - 0.10

    def test_denser_loadings_nearly_perfect(self):
        assert self.mean_r_bl(250, 350, -0.05, 0.05, "tensor") <= 0.05
