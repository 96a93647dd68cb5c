"""Adaptive boundary-flux estimation by prioritized edge splitting.

The boundary complex starts as the polytope's facets. Each step picks the
simplex with the highest priority, splits its longest edge at the midpoint,
and replaces every simplex sharing that edge with two halves. Children
inherit the parent's unit normal and half its area, since midpoint splits
keep them in the parent's hyperplane. One new flow evaluation per split.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .estimators import EstimateTrace
from .field import field_G_batch
from .flows import Diffeomorphism

DEFAULT_EPSILON = 1e-8

EdgeKey = tuple[int, int]


class RefinementError(RuntimeError):
    pass


def edge_key(a: int, b: int) -> EdgeKey:
    if a == b:
        raise ValueError("an edge needs two distinct endpoints")
    return (a, b) if a < b else (b, a)


@dataclass
class EdgeRecord:
    key: EdgeKey
    length_sq: float
    incident: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class SimplexNode:
    id: int
    vertex_ids: tuple[int, ...]
    unit_normal: np.ndarray
    area: float
    edge_keys: tuple[EdgeKey, ...]
    edge_length_sq: float
    vertex_dots: np.ndarray
    priority: float

    @property
    def volume_element(self) -> float:
        return self.area * float(np.mean(self.vertex_dots))


def _priority(area: float, vertex_dots, edge_length_sq: float, epsilon: float) -> float:
    return area * (float(np.std(vertex_dots)) + epsilon) * edge_length_sq


def priority(simplex: SimplexNode, epsilon: float = DEFAULT_EPSILON) -> float:
    """area * (population std of vertex dots + epsilon) * sum of squared edge lengths."""
    return _priority(simplex.area, simplex.vertex_dots, simplex.edge_length_sq, epsilon)


def volume_element(state: "RefinementState", simplex: SimplexNode) -> float:
    """Area times the mean of G . n over the simplex's vertices."""
    dots = [float(np.dot(state.g_vectors[v], simplex.unit_normal)) for v in simplex.vertex_ids]
    return simplex.area * float(np.mean(dots))


class RefinementState:
    def __init__(self, flow: Diffeomorphism, dim: int, epsilon: float = DEFAULT_EPSILON, verify: bool = False):
        self.flow = flow
        self.dim = dim
        self.epsilon = epsilon
        self.verify = verify
        self.vertices: list[np.ndarray] = []
        self.g_vectors: list[np.ndarray] = []
        self.edges: dict[EdgeKey, EdgeRecord] = {}
        self.simplices: dict[int, SimplexNode] = {}
        self.volume = 0.0
        self.points_used = 0
        self.splits = 0
        self.initial_vertices = 0
        self._queue: list[tuple[float, int]] = []
        self._ids = itertools.count()

    # ---------------------------------------------------------------- vertices

    def _add_vertices(self, points: np.ndarray) -> list[int]:
        _, g, _ = field_G_batch(self.flow, points)
        start = len(self.vertices)
        self.vertices.extend(np.array(p) for p in points)
        self.g_vectors.extend(np.array(v) for v in g)
        self.points_used += len(points)
        return list(range(start, start + len(points)))

    # ---------------------------------------------------------------- simplices

    def _edge(self, key: EdgeKey) -> EdgeRecord:
        rec = self.edges.get(key)
        if rec is None:
            diff = self.vertices[key[0]] - self.vertices[key[1]]
            rec = self.edges[key] = EdgeRecord(key, float(diff @ diff))
        return rec

    def _add_simplex(self, vertex_ids: tuple[int, ...], unit_normal: np.ndarray, area: float) -> SimplexNode:
        sid = next(self._ids)
        keys = tuple(edge_key(a, b) for a, b in itertools.combinations(vertex_ids, 2))
        records = [self._edge(k) for k in keys]
        for rec in records:
            rec.incident.add(sid)
        length_sq = sum(rec.length_sq for rec in records)
        dots = np.array([self.g_vectors[v] @ unit_normal for v in vertex_ids])
        node = SimplexNode(
            sid, vertex_ids, unit_normal, area, keys, length_sq, dots,
            _priority(area, dots, length_sq, self.epsilon),
        )
        self.simplices[sid] = node
        heapq.heappush(self._queue, (-node.priority, sid))
        return node

    def _remove_simplex(self, node: SimplexNode) -> None:
        del self.simplices[node.id]
        for key in node.edge_keys:
            rec = self.edges[key]
            rec.incident.discard(node.id)
            if not rec.incident:
                del self.edges[key]

    # ------------------------------------------------------------- inspection

    @property
    def total_area(self) -> float:
        return sum(s.area for s in self.simplices.values())

    def closedness_residual(self) -> float:
        total = np.zeros(self.dim)
        for s in self.simplices.values():
            total += s.area * s.unit_normal
        return float(np.max(np.abs(total)) / self.total_area)

    def recomputed_volume(self) -> float:
        """Sum of live volume elements, without the incremental bookkeeping."""
        return float(sum(s.volume_element for s in self.simplices.values()))

    def to_boundary(self) -> geometry.SimplicialBoundary:
        """Current complex as a plain boundary; normals recomputed from vertex positions."""
        nodes = [self.simplices[k] for k in sorted(self.simplices)]
        facets = np.array([n.vertex_ids for n in nodes], dtype=np.int64)
        return geometry.SimplicialBoundary.from_facets(np.array(self.vertices), facets)

    def check_incidence(self) -> None:
        for sid, node in self.simplices.items():
            for key in node.edge_keys:
                if sid not in self.edges[key].incident:
                    raise RefinementError(f"simplex {sid} missing from edge {key}")
        for key, rec in self.edges.items():
            for sid in rec.incident:
                if key not in self.simplices[sid].edge_keys:
                    raise RefinementError(f"edge {key} lists simplex {sid} that does not contain it")


def init_state(flow: Diffeomorphism, boundary: geometry.SimplicialBoundary,
               epsilon: float = DEFAULT_EPSILON, verify: bool = False) -> RefinementState:
    if not boundary.is_closed():
        raise RefinementError("boundary is not closed")
    state = RefinementState(flow, boundary.dim, epsilon, verify)
    used = boundary.used_vertex_ids()
    new_ids = state._add_vertices(boundary.vertices[used])
    remap = dict(zip(used.tolist(), new_ids))
    state.initial_vertices = len(new_ids)
    units, areas = boundary.unit_normals, boundary.areas
    for i, facet in enumerate(boundary.facets):
        state._add_simplex(tuple(remap[v] for v in facet.tolist()), units[i], float(areas[i]))
    state.volume = state.recomputed_volume()
    return state


def select_edge(state: RefinementState) -> EdgeKey:
    """Longest edge of the highest-priority live simplex; ties go to the lowest id/key."""
    queue = state._queue
    while queue and queue[0][1] not in state.simplices:
        heapq.heappop(queue)
    if not queue:
        raise RefinementError("no simplices left to refine")
    node = state.simplices[queue[0][1]]
    return min(node.edge_keys, key=lambda k: (-state.edges[k].length_sq, k))


def split_edge(state: RefinementState, key: EdgeKey) -> RefinementState:
    rec = state.edges.get(key)
    if rec is None or not rec.incident:
        raise RefinementError(f"edge {key} has no incident simplices")
    a, b = key
    midpoint = 0.5 * (state.vertices[a] + state.vertices[b])
    (m,) = state._add_vertices(midpoint[None])
    for sid in sorted(rec.incident):
        parent = state.simplices[sid]
        state._remove_simplex(parent)
        half = 0.5 * parent.area
        # replacing an endpoint in place keeps the parent's vertex orientation
        child1 = tuple(m if v == b else v for v in parent.vertex_ids)
        child2 = tuple(m if v == a else v for v in parent.vertex_ids)
        n1 = state._add_simplex(child1, parent.unit_normal, half)
        n2 = state._add_simplex(child2, parent.unit_normal, half)
        state.volume += n1.volume_element + n2.volume_element - parent.volume_element
        if state.verify:
            _verify_child(state, n1)
            _verify_child(state, n2)
    state.splits += 1
    return state


def _verify_child(state: RefinementState, node: SimplexNode) -> None:
    normal = geometry.weighted_normal(np.array([state.vertices[v] for v in node.vertex_ids]))
    expected = node.area * node.unit_normal
    if np.linalg.norm(normal - expected) > 1e-10 * max(node.area, 1e-300):
        raise RefinementError(f"child {node.id} geometry drifted from its inherited normal")


def run_bfa(flow: Diffeomorphism, boundary: geometry.SimplicialBoundary, budget: int,
            epsilon: float = DEFAULT_EPSILON, verify: bool = False) -> EstimateTrace:
    trace, _ = run_bfa_with_state(flow, boundary, budget, epsilon, verify)
    return trace


def run_bfa_with_state(flow, boundary, budget, epsilon=DEFAULT_EPSILON, verify=False):
    n_vertices = len(boundary.used_vertex_ids())
    if budget < n_vertices:
        raise RefinementError(f"budget {budget} is below the {n_vertices} boundary vertices")
    state = init_state(flow, boundary, epsilon, verify)
    trace = EstimateTrace("BFA")
    trace.record(state.points_used, state.volume)
    while state.points_used < budget:
        split_edge(state, select_edge(state))
        trace.record(state.points_used, state.volume)
    return trace, state


__all__ = [
    "EdgeRecord", "RefinementState", "SimplexNode", "edge_key", "init_state",
    "priority", "run_bfa", "run_bfa_with_state", "select_edge", "split_edge", "volume_element",
]
