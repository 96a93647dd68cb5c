import json
import re

import numpy as np
import pytest

from fluxcdf import harness
from fluxcdf.estimators import checkpoints, is_reference
from fluxcdf.flows import FlowSpec, make_flow
from fluxcdf.geometry import convex_hull, polytope_volume
from fluxcdf.harness import (
    BenchConfig, EvalRecord, HullRejectionError, HullSpec, convergence_report, evaluate,
    generate_hull, reference_cdf, summarize,
)

from conftest import builtin_specs, coupling_adapter, sphere_hull

IDENTITY2 = FlowSpec("identity", 2)


def small_config(flows, **kw):
    base = dict(radii=[0.2], hulls_per_cell=1, budget=100, runs=5, reference_samples=20_000)
    base.update(kw)
    return BenchConfig(flows=flows, **base)


# ---------------------------------------------------------------- hull spec


@pytest.mark.parametrize("kw", [{"radius": 0}, {"radius": 1, "n_points": 2}, {"radius": 1, "min_cdf": 1.0}])
def test_hull_spec_validation(kw):
    with pytest.raises(ValueError):
        HullSpec(IDENTITY2, **kw)


def test_generate_simplex_hull():
    hull = generate_hull(HullSpec(FlowSpec("identity", 3), 0.3, n_points=4, seed=1, min_cdf=0.0), reference_samples=1000)
    assert hull.boundary.n_facets == 4


def test_generate_identity_reference_is_volume():
    hull = generate_hull(HullSpec(IDENTITY2, 0.25, seed=3))
    assert hull.reference_se == 0.0
    assert hull.reference == pytest.approx(polytope_volume(hull.boundary), abs=1e-15)
    assert hull.reference >= 0.01
    # the flow's support is the cube, so the accepted hull must sit inside it
    assert np.all((hull.boundary.vertices >= 0) & (hull.boundary.vertices <= 1))


def test_generate_keeps_all_sphere_points():
    hull = generate_hull(HullSpec(builtin_specs(3)["adapter_identity"], 1.0, seed=2), reference_samples=20_000)
    assert len(hull.boundary.vertices) == 20
    assert np.allclose(np.linalg.norm(hull.boundary.vertices - hull.center, axis=1), 1.0)


def test_generate_rejects_tiny_hulls():
    # a radius-0.01 hull in 3D holds far less than 0.5 probability under any flow here
    with pytest.raises(HullRejectionError, match="larger radius"):
        generate_hull(HullSpec(FlowSpec("identity", 3), 0.01, min_cdf=0.5), reference_samples=1000)


def test_generate_reproducible():
    spec = HullSpec(builtin_specs(2)["adapter_coupling"], 0.75, seed=4)
    a = generate_hull(spec, reference_samples=20_000)
    b = generate_hull(spec, reference_samples=20_000)
    assert np.array_equal(a.boundary.vertices, b.boundary.vertices)
    assert a.reference == b.reference


# --------------------------------------------------------------- reference


def test_reference_identity_exact():
    hull = sphere_hull([0.5, 0.5], 0.3, seed=1)
    assert reference_cdf(make_flow(IDENTITY2), hull) == (pytest.approx(polytope_volume(hull), abs=1e-15), 0.0)


def test_reference_affine_square():
    flow = make_flow(FlowSpec("affine", 2, {"matrix": [[2, 0], [0, 2]]}))
    square = convex_hull([[0, 0], [1, 0], [0, 1], [1, 1]])
    assert reference_cdf(flow, square) == (pytest.approx(0.25, abs=1e-15), 0.0)


def test_reference_coupling_precision():
    flow = coupling_adapter(2)
    value, se = reference_cdf(flow, sphere_hull([0.0, 0.0], 1.0, seed=2))
    assert 0 < value < 1
    assert 0 < se < 1e-3


@pytest.mark.parametrize("d", [2, 3])
def test_reference_analytic_vs_sampling(d):
    flow = make_flow(builtin_specs(d)["affine"])
    rng = np.random.default_rng(d)
    hull = convex_hull(flow.forward(rng.uniform(0.1, 0.9, size=(12, d))))
    exact, se0 = reference_cdf(flow, hull)
    assert se0 == 0.0
    sampled, se = is_reference(flow, hull, harness.REFERENCE_SAMPLES, np.random.default_rng(0))
    assert abs(sampled - exact) <= 3 * se + 1e-12


# ---------------------------------------------------------------- records


def test_eval_record_arithmetic():
    r = EvalRecord.make("h", "f", 2, 0.5, "MC", 10, 0, 0.3, 0.25)
    assert r.abs_error == pytest.approx(0.05)
    assert r.rel_error == pytest.approx(0.2)


def test_records_roundtrip(tmp_path):
    recs = [EvalRecord.make("h0", "f", 2, 0.5, m, 10, 0, 0.1 * i, 0.3) for i, m in enumerate(harness.METHODS)]
    harness.write_records(recs, tmp_path / "r.csv")
    assert harness.read_records(tmp_path / "r.csv") == recs


def test_records_roundtrip_numpy_scalars(tmp_path):
    rec = EvalRecord.make("h0", "f", 2, np.float64(0.5), "IS", 10, 0, np.float64(0.2), np.float64(0.25))
    harness.write_records([rec], tmp_path / "r.csv")
    assert "np.float64" not in (tmp_path / "r.csv").read_text()
    assert harness.read_records(tmp_path / "r.csv") == [rec]


def test_format_pm_matches_table_shape():
    assert re.fullmatch(r"\d\.\d{5}±\d\.\d{5}", harness.format_pm(0.00152, 0.00554))
    assert harness.format_pm(0.00152, 0.00554) == "0.00152±0.00554"


def test_summary_table():
    recs = [EvalRecord.make("h", "f", 2, 0.5, "MC", 10, i, 0.2 + 0.01 * i, 0.25) for i in range(4)]
    summary = summarize(recs)
    assert list(summary) == ["MC"]
    table = harness.format_table(summary)
    assert table.splitlines()[0] == "method, mean_abs ± std_abs, mean_rel ± std_rel"
    assert re.fullmatch(r"MC, \d\.\d{5}±\d\.\d{5}, \d\.\d{5}±\d\.\d{5}", table.splitlines()[1])


# ---------------------------------------------------------------- evaluate


def test_evaluate_identity_cell():
    records, failures = evaluate(small_config([IDENTITY2]))
    assert not failures
    assert len(records) == 16
    counts = {m: sum(r.method == m for r in records) for m in harness.METHODS}
    assert counts == {"MC": 5, "IS": 5, "BFS": 5, "BFA": 1}
    bfa = [r for r in records if r.method == "BFA"]
    assert bfa[0].run == 0 and bfa[0].abs_error < 1e-9
    for r in records:
        assert r.abs_error == abs(r.estimate - r.reference)


def test_evaluate_records_failures():
    # radius far too small for min_cdf: the cell fails but the run continues
    records, failures = evaluate(small_config([FlowSpec("identity", 3), IDENTITY2], radii=[0.01], min_cdf=0.5))
    assert records == []
    assert len(failures) == 2


def test_evaluate_workers_match_serial():
    config = small_config([builtin_specs(2)["adapter_coupling"]], hulls_per_cell=2, radii=[0.75], runs=2)
    assert evaluate(config, workers=2) == evaluate(config, workers=1)


def test_bench_config_roundtrip(tmp_path):
    config = harness.default_config((2,), budget=123)
    config.save(tmp_path / "c.json")
    assert BenchConfig.load(tmp_path / "c.json") == config
    assert [f.label for f in config.flows] == ["gauss2d", "affine2d", "coupling2d"]


def test_run_bench_outputs(tmp_path):
    summary = harness.run_bench(small_config([IDENTITY2]), tmp_path)
    assert summary["n_records"] == 16
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["methods"]["BFA"]["mean_abs"] < 1e-9
    assert len(harness.read_records(tmp_path / "records.csv")) == 16


# -------------------------------------------------------------- convergence


def test_convergence_identity_bfa_zero():
    flow = make_flow(IDENTITY2)
    hull = sphere_hull([0.5, 0.5], 0.3, seed=5)
    bundle = convergence_report(flow, hull, 64, runs=2)
    assert np.allclose(bundle["BFA"][0].estimates, polytope_volume(hull), atol=1e-12)


def test_convergence_trace_lengths(tmp_path):
    flow, hull = coupling_adapter(2), sphere_hull([0.0, 0.0], 1.0, seed=6)
    bundle = convergence_report(flow, hull, 100, runs=3)
    assert [len(bundle[m]) for m in harness.METHODS] == [3, 3, 3, 1]
    for m in ("MC", "IS", "BFS"):
        assert all(t.points_used.tolist() == checkpoints(100) for t in bundle[m])
    assert bundle["BFA"][0].points_used.tolist() == list(range(20, 101))
    harness.write_convergence(bundle, 0.3, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "method,run,points_used,estimate,abs_error"
    assert len(lines) == 1 + 9 * len(checkpoints(100)) + 81


def test_convergence_bfa_beats_samplers_2d():
    flow, hull = coupling_adapter(2), sphere_hull([0.1, 0.0], 1.0, seed=7)
    reference, _ = reference_cdf(flow, hull)
    bundle = convergence_report(flow, hull, 500, runs=5)
    err = {m: np.median([abs(t.final - reference) for t in bundle[m]]) for m in harness.METHODS}
    assert err["BFA"] < err["MC"] and err["BFA"] < err["IS"]
