import csv
import io
import json

import pytest

from pdeforge.bench import (
    BenchConfigError,
    BenchRecord,
    emit_report,
    fit_speedup_regression,
    run_timing_suite,
)


def synthetic_records(speedups):
    records = []
    for dim, s in speedups:
        records.append(BenchRecord(dim, "gmres", 1e-5, 10, s * 10.0, 3))
        records.append(BenchRecord(dim, "diffoas_action", None, 10, 10.0, 3))
    return records


class TestRegression:
    def test_exact_linear(self):
        records = synthetic_records([(n, 0.5 * n) for n in
                                     (100, 400, 900, 1600)])
        fit = fit_speedup_regression(records, 1e-5)
        assert fit.slope == pytest.approx(0.5, rel=1e-12)
        assert fit.pearson_r == pytest.approx(1.0, rel=1e-12)
        assert not fit.degenerate

    def test_constant_speedup_degenerate(self):
        records = synthetic_records([(n, 7.0) for n in (100, 400, 900)])
        fit = fit_speedup_regression(records, 1e-5)
        assert fit.slope == 0.0
        assert fit.pearson_r == 0.0
        assert fit.degenerate

    def test_too_few_points(self):
        records = synthetic_records([(100, 1.0), (400, 2.0)])
        with pytest.raises(BenchConfigError):
            fit_speedup_regression(records, 1e-5)

    def test_missing_tolerance(self):
        records = synthetic_records([(n, n) for n in (100, 400, 900)])
        with pytest.raises(BenchConfigError):
            fit_speedup_regression(records, 1e-3)


class TestEmitReport:
    def test_empty_csv_is_header_only(self):
        text = emit_report([], None, "csv")
        assert text.strip().splitlines() == [
            "method,pde,dim,tol,samples,repeats,median_seconds"]

    def test_csv_row_count(self):
        records = synthetic_records([(n, n) for n in (100, 400, 900)])
        fit = fit_speedup_regression(records, 1e-5)
        rows = list(csv.reader(io.StringIO(
            emit_report(records, fit, "csv", pde="darcy"))))
        assert len(rows) == len(records) + 2 + 1  # records + regression + header

    def test_json_round_trip(self):
        records = synthetic_records([(n, n) for n in (100, 400, 900)])
        fit = fit_speedup_regression(records, 1e-5)
        payload = json.loads(emit_report(records, fit, "json", pde="darcy"))
        assert len(payload["records"]) == len(records)
        assert payload["regression"]["slope"] == pytest.approx(fit.slope)
        assert payload["records"][0]["median_seconds"] == \
            records[0].wall_seconds

    def test_unknown_format(self):
        with pytest.raises(BenchConfigError):
            emit_report([], None, "xml")


class TestTimingSuite:
    def test_rejects_bad_inputs(self):
        with pytest.raises(BenchConfigError):
            run_timing_suite("darcy", [7], [1e-3], 2, 3)
        with pytest.raises(BenchConfigError):
            run_timing_suite("darcy", [100], [1e-3], 0, 3)
        with pytest.raises(BenchConfigError):
            run_timing_suite("darcy", [100], [1e-3], 2, 2)

    def test_small_suite_structure(self):
        records = run_timing_suite("darcy", [64, 144], [1e-3, 1e-5],
                                   samples_per_point=2, repeats=3,
                                   master_seed=1, n_basis=3)
        methods = {(r.matrix_dim, r.method, r.tol) for r in records}
        for dim in (64, 144):
            assert (dim, "diffoas_action", None) in methods
            assert (dim, "diffoas_total", None) in methods
            for tol in (1e-3, 1e-5):
                assert (dim, "gmres", tol) in methods
        for r in records:
            assert r.wall_seconds >= 0.0
            assert len(r.per_repeat) == r.repeats

    def test_cg_included_for_spd(self):
        records = run_timing_suite("darcy", [64], [1e-4], 2, 3,
                                   master_seed=2, n_basis=2, include_cg=True)
        assert any(r.method == "cg" for r in records)

    def test_deterministic_workload(self):
        a = run_timing_suite("darcy", [64], [1e-3], 2, 3, master_seed=3,
                             n_basis=2)
        b = run_timing_suite("darcy", [64], [1e-3], 2, 3, master_seed=3,
                             n_basis=2)
        assert [(r.method, r.matrix_dim, r.samples) for r in a] == \
            [(r.method, r.matrix_dim, r.samples) for r in b]
