import json

import numpy as np
import pytest

from spdsliced import RngState, save_spd_dataset, wishart_stack
from spdsliced.errors import DataValidationError
from spdsliced.experiments import (
    fit_loglog_slope,
    run_adapt,
    run_benchmark_runtime,
    run_distance,
    run_gen_wishart,
    run_kernel_ridge,
    run_projection_complexity,
    run_sample_complexity,
)


@pytest.fixture
def dataset_pair(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_spd_dataset(str(a), wishart_stack(RngState(1), 8, 3, 9))
    save_spd_dataset(str(b), wishart_stack(RngState(2), 8, 3, 9))
    return str(a), str(b)


def test_fit_loglog_slope_recovers_power_law():
    xs = np.array([10.0, 100.0, 1000.0])
    ys = 3.0 * xs**-0.5
    assert abs(fit_loglog_slope(xs, ys) + 0.5) < 1e-12


class TestReproducibility:
    def test_distance_rerun_reproduces_values(self, dataset_pair):
        a, b = dataset_pair
        r1 = run_distance(a, b, "spdsw", projections=30, seed=9)
        r2 = run_distance(a, b, "spdsw", projections=30, seed=9)
        assert r1.rows == r2.rows
        assert r1.config == r2.config

    def test_sample_complexity_rerun_reproduces_values(self):
        kwargs = dict(dims=(2,), n_grid=(10, 20), repeats=3,
                      metrics=("spdsw",), projections=20, seed=4)
        r1 = run_sample_complexity(**kwargs)
        r2 = run_sample_complexity(**kwargs)
        assert r1.rows == r2.rows

    def test_projection_complexity_rerun_reproduces_values(self):
        kwargs = dict(dims=(2,), L_grid=(5, 10), L_star=50, repeats=3, n=20, seed=4)
        r1 = run_projection_complexity(**kwargs)
        r2 = run_projection_complexity(**kwargs)
        assert r1.rows == r2.rows


class TestBenchmarkRuntime:
    def test_row_count_is_grid_times_metrics(self):
        report = run_benchmark_runtime(
            n_grid=(10, 20, 40), d=2, projections=5,
            metrics=("spdsw", "lew"), repeats=1, seed=1,
        )
        assert len(report.rows) == 3 * 2

    def test_cost_cap_skips_quadratic_metrics(self):
        report = run_benchmark_runtime(
            n_grid=(10, 200), d=2, projections=5,
            metrics=("spdsw", "lew"), repeats=1, seed=1,
            max_cost_bytes=8.0 * 100 * 100,
        )
        lew = {r["n"]: r for r in report.rows if r["metric"] == "lew"}
        assert not lew[10]["skipped"]
        assert lew[200]["skipped"]
        spdsw_rows = [r for r in report.rows if r["metric"] == "spdsw"]
        assert not any(r["skipped"] for r in spdsw_rows)


class TestGenWishart:
    def test_class_counts_balanced(self, tmp_path):
        out = tmp_path / "g.json"
        run_gen_wishart(str(out), d=3, n=11, dof=7, seed=2, classes=3)
        from spdsliced import load_spd_dataset

        loaded = load_spd_dataset(str(out))
        counts = np.bincount(loaded.labels)
        assert counts.tolist() == [4, 4, 3]

    def test_rejects_bad_dof(self, tmp_path):
        with pytest.raises(DataValidationError):
            run_gen_wishart(str(tmp_path / "g.json"), d=5, n=3, dof=2)


class TestAdapt:
    def test_requires_source_labels(self, dataset_pair, tmp_path):
        a, b = dataset_pair
        with pytest.raises(DataValidationError):
            run_adapt(a, b, epochs=1, projections=5)

    def test_unlabeled_target_skips_accuracy(self, tmp_path):
        src, dst = tmp_path / "s.json", tmp_path / "t.json"
        run_gen_wishart(str(src), d=2, n=8, dof=6, seed=1, classes=2)
        save_spd_dataset(str(dst), wishart_stack(RngState(9), 8, 2, 6))
        report = run_adapt(str(src), str(dst), epochs=2, projections=5, seed=1)
        summary = report.rows[0]
        assert summary["before_accuracy"] is None
        assert summary["after_accuracy"] is None


class TestKernelRidgeManifests:
    def test_rejects_malformed_manifest(self, tmp_path):
        bad = tmp_path / "m.json"
        bad.write_text(json.dumps([{"target": 1.0}]))
        with pytest.raises(DataValidationError):
            run_kernel_ridge(str(bad))

    def test_rejects_band_count_disagreement(self, tmp_path, dataset_pair):
        a, b = dataset_pair
        manifest = tmp_path / "m.json"
        manifest.write_text(json.dumps([
            {"paths": [a], "target": 1.0},
            {"paths": [a, b], "target": 2.0},
        ]))
        with pytest.raises(DataValidationError):
            run_kernel_ridge(str(manifest))

    def test_multiband_sums_kernels(self, tmp_path):
        entries = []
        for i in range(6):
            p1, p2 = tmp_path / f"a{i}.json", tmp_path / f"b{i}.json"
            scale = 1.0 + 0.2 * i
            save_spd_dataset(str(p1), wishart_stack(RngState(50 + i), 15, 2, 8,
                                                    scale=scale * np.eye(2)))
            save_spd_dataset(str(p2), wishart_stack(RngState(80 + i), 15, 2, 8,
                                                    scale=scale * np.eye(2)))
            entries.append({"paths": [str(p1), str(p2)], "target": scale})
        manifest = tmp_path / "m.json"
        manifest.write_text(json.dumps(entries))
        report = run_kernel_ridge(str(manifest), folds=2, projections=15,
                                  quantiles=15, alpha=1e-8, seed=3)
        folds = [r for r in report.rows if r["record"] == "fold"]
        assert len(folds) == 2
        assert all(np.isfinite(r["mae"]) for r in folds)
