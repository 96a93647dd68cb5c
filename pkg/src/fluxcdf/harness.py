"""Benchmark protocol: sphere-point hulls around flow samples, references, error tables."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .estimators import (
    EstimateTrace, bfs_estimate, is_estimate, is_reference, mc_estimate,
)
from .flows import Diffeomorphism, FlowSpec, is_affine, make_flow, sample
from .refine import DEFAULT_EPSILON, run_bfa

log = logging.getLogger(__name__)

REFERENCE_SAMPLES = 2_000_000
REFERENCE_SEED = 20_211_201
SCREEN_SAMPLES = 20_000
MAX_REJECTIONS = 100
METHODS = ("MC", "IS", "BFS", "BFA")


class HullRejectionError(RuntimeError):
    pass


@dataclass
class HullSpec:
    flow_spec: FlowSpec
    radius: float
    n_points: int = 20
    seed: int = 0
    min_cdf: float = 0.01

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.n_points < self.flow_spec.dim + 1:
            raise ValueError("need at least d+1 hull points")
        if not 0 <= self.min_cdf < 1:
            raise ValueError("min_cdf must lie in [0, 1)")


@dataclass
class GeneratedHull:
    boundary: geometry.SimplicialBoundary
    center: np.ndarray
    reference: float
    reference_se: float
    attempts: int


@dataclass
class EvalRecord:
    hull_id: str
    flow: str
    dim: int
    radius: float
    method: str
    budget: int
    run: int
    estimate: float
    reference: float
    abs_error: float
    rel_error: float

    @classmethod
    def make(cls, hull_id, flow, dim, radius, method, budget, run, estimate, reference):
        estimate, reference, radius = float(estimate), float(reference), float(radius)
        abs_error = abs(estimate - reference)
        return cls(hull_id, flow, dim, radius, method, budget, run, estimate, reference,
                   abs_error, abs_error / reference if reference else math.inf)


# ----------------------------------------------------------------- references


def _support_ok(flow: Diffeomorphism, boundary: geometry.SimplicialBoundary) -> bool:
    """Whether g maps every boundary vertex into the unit cube.

    Always true for flows onto R^d. For cube-supported flows the boundary
    flux identity only holds when V stays inside the support.
    """
    if flow.full_support:
        return True
    y = flow.inverse(boundary.vertices)
    return bool(np.all(np.isfinite(y)) and np.all((y >= 0) & (y <= 1)))


def reference_cdf(flow: Diffeomorphism, boundary: geometry.SimplicialBoundary,
                  n_samples: int = REFERENCE_SAMPLES, seed: int = REFERENCE_SEED) -> tuple[float, float]:
    """Ground-truth P(x in V) and its standard error.

    Exact (se 0) for affine flows whose preimage of V lies in the cube;
    otherwise a large-sample importance-sampling estimate.
    """
    if is_affine(flow) and _support_ok(flow, boundary):
        volume = geometry.polytope_volume(boundary)
        return float(np.exp(flow.log_abs_det_jacobian_inverse(boundary.vertices[0])) * volume), 0.0
    return is_reference(flow, boundary, n_samples, np.random.default_rng(seed))


def sphere_points(center, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    directions = rng.standard_normal((n, len(center)))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return center + radius * directions


def generate_hull(spec: HullSpec, rng: np.random.Generator | None = None,
                  reference_samples: int = REFERENCE_SAMPLES) -> GeneratedHull:
    """Draw hulls until one carries at least ``min_cdf`` probability.

    Each attempt draws a fresh center from the flow. A cheap IS screen drops
    hulls far below the threshold before the full reference is computed.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    flow = make_flow(spec.flow_spec)
    for attempt in range(1, MAX_REJECTIONS + 1):
        center = sample(flow, rng, 1)[0]
        points = sphere_points(center, spec.radius, spec.n_points, rng)
        boundary = geometry.convex_hull(points)
        if not _support_ok(flow, boundary):
            continue
        ref_seed = int(rng.integers(2**31))
        screen, _ = reference_cdf(flow, boundary, min(SCREEN_SAMPLES, reference_samples), ref_seed)
        if screen < 0.5 * spec.min_cdf:
            continue
        reference, se = reference_cdf(flow, boundary, reference_samples, ref_seed + 1)
        if reference >= spec.min_cdf:
            return GeneratedHull(boundary, center, reference, se, attempt)
    raise HullRejectionError(
        f"{MAX_REJECTIONS} hulls in a row fell below min_cdf={spec.min_cdf}; try a larger radius"
    )


# ------------------------------------------------------------------ benchmark


@dataclass
class BenchConfig:
    flows: list[FlowSpec]
    radii: list[float] = field(default_factory=lambda: [0.5, 0.75, 1.0])
    n_points: int = 20
    min_cdf: float = 0.01
    budget: int = 4000
    runs: int = 5
    seed: int = 0
    hulls_per_cell: int = 5
    reference_samples: int = REFERENCE_SAMPLES
    epsilon: float = DEFAULT_EPSILON

    def to_dict(self) -> dict:
        out = asdict(self)
        out["flows"] = [f.to_dict() for f in self.flows]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        data = dict(data)
        data["flows"] = [FlowSpec.from_dict(f) for f in data["flows"]]
        return cls(**data)

    @classmethod
    def load(cls, path) -> "BenchConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def default_flow_specs(dim: int, seed: int = 0) -> list[FlowSpec]:
    """Three seeded flows per dimension: standard normal, affine-Gaussian, 3-layer coupling."""
    rng = np.random.default_rng([seed, dim])
    matrix = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
    return [
        FlowSpec("gaussian_base_adapter", dim, children=[FlowSpec("identity", dim)], name=f"gauss{dim}d"),
        FlowSpec("gaussian_base_adapter", dim, name=f"affine{dim}d", children=[
            FlowSpec("affine", dim, {"matrix": matrix.round(6).tolist(), "offset": [0.0] * dim}),
        ]),
        FlowSpec("gaussian_base_adapter", dim, name=f"coupling{dim}d", children=[
            FlowSpec("coupling", dim, {"layers": 3, "hidden": 16}, seed=seed + 100 * dim),
        ]),
    ]


def default_config(dims=(2, 3), **overrides) -> BenchConfig:
    flows = [spec for d in dims for spec in default_flow_specs(d)]
    return BenchConfig(flows=flows, **overrides)


def _hull_task(config: BenchConfig, flow_idx: int, radius_idx: int, hull_idx: int):
    spec = config.flows[flow_idx]
    radius = config.radii[radius_idx]
    hull_id = f"{spec.label}-f{flow_idx}-r{radius:g}-h{hull_idx}"
    seq = np.random.SeedSequence([config.seed, flow_idx, radius_idx, hull_idx])
    hull_seed, *run_seeds = seq.spawn(1 + 3 * config.runs)
    try:
        hull = generate_hull(
            HullSpec(spec, radius, config.n_points, config.seed, config.min_cdf),
            np.random.default_rng(hull_seed), config.reference_samples,
        )
    except Exception as exc:  # cell failures are reported, not fatal
        log.warning("hull %s failed: %s", hull_id, exc)
        return hull_id, [], str(exc)
    flow = make_flow(spec)
    ref = hull.reference
    budget = config.budget

    def rec(method, run, estimate):
        return EvalRecord.make(hull_id, spec.label, spec.dim, radius, method, budget, run, estimate, ref)

    records = []
    try:
        for method in METHODS:
            if method == "BFA":
                records.append(rec(method, 0, run_bfa(flow, hull.boundary, budget, config.epsilon).final))
                continue
            for run in range(config.runs):
                offset = {"MC": 0, "IS": 1, "BFS": 2}[method] * config.runs + run
                rng = np.random.default_rng(run_seeds[offset])
                if method == "MC":
                    trace = mc_estimate(flow, hull.boundary, budget, rng)
                elif method == "IS":
                    trace = is_estimate(flow, hull.boundary, budget, rng)
                else:
                    trace = bfs_estimate(flow, hull.boundary, budget, rng)
                records.append(rec(method, run, trace.final))
    except Exception as exc:
        log.warning("estimators on %s failed: %s", hull_id, exc)
        return hull_id, records, str(exc)
    return hull_id, records, None


def evaluate(config: BenchConfig, workers: int = 1):
    """Full factorial over (flow, radius, hull, method, run).

    Returns ``(records, failures)`` with records sorted by hull then method order.
    """
    tasks = [
        (fi, ri, hi)
        for fi in range(len(config.flows))
        for ri in range(len(config.radii))
        for hi in range(config.hulls_per_cell)
    ]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_hull_task, *zip(*[(config, *t) for t in tasks])))
    else:
        results = [_hull_task(config, *t) for t in tasks]
    records, failures = [], {}
    for hull_id, recs, err in results:
        records.extend(recs)
        if err:
            failures[hull_id] = err
    return records, failures


def format_pm(mean: float, std: float) -> str:
    return f"{mean:.5f}±{std:.5f}"


def summarize(records: list[EvalRecord]) -> dict:
    """Per-method mean and std of absolute and relative errors."""
    out = {}
    for method in METHODS:
        rows = [r for r in records if r.method == method]
        if not rows:
            continue
        abs_err = np.array([r.abs_error for r in rows])
        rel_err = np.array([r.rel_error for r in rows])
        out[method] = {
            "n": len(rows),
            "mean_abs": float(abs_err.mean()),
            "std_abs": float(abs_err.std()),
            "mean_rel": float(rel_err.mean()),
            "std_rel": float(rel_err.std()),
            "abs": format_pm(abs_err.mean(), abs_err.std()),
            "rel": format_pm(rel_err.mean(), rel_err.std()),
        }
    return out


def format_table(summary: dict) -> str:
    lines = ["method, mean_abs ± std_abs, mean_rel ± std_rel"]
    for method, row in summary.items():
        lines.append(f"{method}, {row['abs']}, {row['rel']}")
    return "\n".join(lines)


RECORD_FIELDS = [f for f in EvalRecord.__dataclass_fields__]


def write_records(records: list[EvalRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in asdict(r).values()])


def read_records(path) -> list[EvalRecord]:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    types = {"dim": int, "budget": int, "run": int, "radius": float, "estimate": float,
             "reference": float, "abs_error": float, "rel_error": float}
    return [EvalRecord(**{k: types.get(k, str)(v) for k, v in row.items()}) for row in rows]


def run_bench(config: BenchConfig, out_dir, workers: int = 1) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, failures = evaluate(config, workers)
    write_records(records, out_dir / "records.csv")
    summary = {"methods": summarize(records), "failures": failures, "n_records": len(records)}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary


# ---------------------------------------------------------------- convergence


def convergence_report(flow: Diffeomorphism, boundary: geometry.SimplicialBoundary, budget: int,
                       runs: int = 5, seed: int = 0,
                       epsilon: float = DEFAULT_EPSILON) -> dict[str, list[EstimateTrace]]:
    """Estimate traces for all four methods; stochastic ones repeated ``runs`` times.

    BF-S uses the area-weighted form so it has a running trace.
    """
    seeds = np.random.SeedSequence(seed).spawn(3 * runs)
    bundle: dict[str, list[EstimateTrace]] = {"MC": [], "IS": [], "BFS": []}
    volume = geometry.polytope_volume(boundary)
    for run in range(runs):
        bundle["MC"].append(mc_estimate(flow, boundary, budget, np.random.default_rng(seeds[run]), seed=run))
        bundle["IS"].append(is_estimate(flow, boundary, budget, np.random.default_rng(seeds[runs + run]),
                                        seed=run, volume=volume))
        bundle["BFS"].append(bfs_estimate(flow, boundary, budget, np.random.default_rng(seeds[2 * runs + run]),
                                          seed=run))
    bundle["BFA"] = [run_bfa(flow, boundary, budget, epsilon)]
    return bundle


def write_convergence(bundle: dict[str, list[EstimateTrace]], reference: float, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "run", "points_used", "estimate", "abs_error"])
        for method in METHODS:
            for run, trace in enumerate(bundle.get(method, [])):
                for p, e in trace.entries:
                    writer.writerow([method, run, p, repr(float(e)), repr(float(abs(e - reference)))])
