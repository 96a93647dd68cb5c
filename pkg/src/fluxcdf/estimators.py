"""Estimators of P(x in V) for a flow and a simplicial polytope V."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .field import field_G_batch
from .flows import Diffeomorphism, density, sample

METHODS = ("MC", "IS", "BFS", "BFA")
CHUNK = 200_000


@dataclass
class EstimateTrace:
    method: str
    seed: int | None = None
    entries: list[tuple[int, float]] = field(default_factory=list)

    def record(self, points_used: int, estimate: float) -> None:
        if self.entries and points_used <= self.entries[-1][0]:
            raise ValueError("points_used must increase strictly")
        self.entries.append((int(points_used), float(estimate)))

    @property
    def final(self) -> float:
        return self.entries[-1][1]

    @property
    def points_used(self) -> np.ndarray:
        return np.array([p for p, _ in self.entries], dtype=np.int64)

    @property
    def estimates(self) -> np.ndarray:
        return np.array([e for _, e in self.entries])

    def thinned(self, every: int) -> "EstimateTrace":
        """Keep every ``every``-th entry plus the last one."""
        if every <= 1:
            return self
        kept = [e for i, e in enumerate(self.entries) if i % every == 0]
        if kept[-1] != self.entries[-1]:
            kept.append(self.entries[-1])
        return EstimateTrace(self.method, self.seed, kept)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["points_used", "estimate"])
            for p, e in self.entries:
                writer.writerow([p, repr(e)])


def checkpoints(budget: int) -> list[int]:
    """Powers of two below ``budget``, then ``budget`` itself."""
    out, p = [], 1
    while p < budget:
        out.append(p)
        p *= 2
    out.append(budget)
    return out


def _running_trace(method: str, values: np.ndarray, seed, scale: float = 1.0) -> EstimateTrace:
    trace = EstimateTrace(method, seed)
    cumulative = np.cumsum(values)
    for n in checkpoints(len(values)):
        trace.record(n, scale * cumulative[n - 1] / n)
    return trace


def mc_estimate(flow: Diffeomorphism, boundary, budget: int, rng: np.random.Generator, seed=None) -> EstimateTrace:
    """Fraction of flow samples that land inside V."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    hits = np.concatenate([
        geometry.contains_many(boundary, sample(flow, rng, min(CHUNK, budget - start)))
        for start in range(0, budget, CHUNK)
    ])
    return _running_trace("MC", hits.astype(float), seed)


def is_estimate(flow: Diffeomorphism, boundary, budget: int, rng: np.random.Generator, seed=None,
                volume: float | None = None) -> EstimateTrace:
    """vol(V) times the mean flow density at uniform points of V."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if volume is None:
        volume = geometry.polytope_volume(boundary)
    dens = np.concatenate([
        density(flow, geometry.sample_uniform(boundary, rng, min(CHUNK, budget - start)))
        for start in range(0, budget, CHUNK)
    ])
    return _running_trace("IS", dens, seed, scale=volume)


def is_reference(flow: Diffeomorphism, boundary, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Large-sample IS estimate and its standard error."""
    volume = geometry.polytope_volume(boundary)
    total = total_sq = 0.0
    for start in range(0, n, CHUNK):
        w = volume * density(flow, geometry.sample_uniform(boundary, rng, min(CHUNK, n - start)))
        total += w.sum()
        total_sq += (w**2).sum()
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0)
    return float(mean), float(np.sqrt(var / n))


def _facet_dots(flow, boundary, points, facet_ids) -> np.ndarray:
    _, g, _ = field_G_batch(flow, points)
    return np.einsum("ij,ij->i", g, boundary.unit_normals[facet_ids])


def bfs_estimate(flow: Diffeomorphism, boundary, budget: int, rng: np.random.Generator,
                 variant: str = "area_weighted", seed=None) -> EstimateTrace:
    """Stochastic boundary flux: Monte-Carlo surface integral of G . n over the boundary."""
    if variant == "area_weighted":
        if budget < 1:
            raise ValueError("budget must be at least 1")
        dots = []
        for start in range(0, budget, CHUNK):
            pts, ids = geometry.sample_uniform_on_facets(boundary, rng, min(CHUNK, budget - start))
            dots.append(_facet_dots(flow, boundary, pts, ids))
        return _running_trace("BFS", np.concatenate(dots), seed, scale=boundary.total_area)
    if variant == "per_simplex":
        k = boundary.n_facets
        if budget < k:
            raise ValueError(f"per_simplex needs a budget of at least {k} (one point per facet)")
        per = budget // k
        ids = np.repeat(np.arange(k), per)
        corners = boundary.vertices[boundary.facets[ids]]
        pts = geometry._simplex_points(corners, rng)
        dots = _facet_dots(flow, boundary, pts, ids).reshape(k, per)
        estimate = float(np.dot(boundary.areas, dots.mean(axis=1)))
        trace = EstimateTrace("BFS", seed)
        trace.record(per * k, estimate)
        return trace
    raise ValueError(f"unknown BF-S variant {variant!r}")


def vertex_dots(flow: Diffeomorphism, boundary) -> tuple[np.ndarray, np.ndarray]:
    """G at every boundary vertex (one flow evaluation each) and per-facet vertex dots."""
    used = boundary.used_vertex_ids()
    g = np.zeros_like(boundary.vertices)
    g[used] = field_G_batch(flow, boundary.vertices[used])[1]
    dots = np.einsum("fvd,fd->fv", g[boundary.facets], boundary.unit_normals)
    return g, dots


def bf_deterministic(flow: Diffeomorphism, boundary) -> float:
    """sum_i area_i * mean over the vertices of S_i of G . n_i."""
    _, dots = vertex_dots(flow, boundary)
    return float(np.dot(boundary.areas, dots.mean(axis=1)))
