"""Vector fields whose boundary flux gives volume (base space) or probability (target space)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .flows import Diffeomorphism


class FieldEvaluationError(ArithmeticError):
    def __init__(self, point, message="non-finite Jacobian"):
        super().__init__(f"{message} at x={np.asarray(point).tolist()}")
        self.point = np.asarray(point)


@dataclass(frozen=True)
class FieldSample:
    point: np.ndarray
    base_point: np.ndarray
    g_vector: np.ndarray
    log_det: float


def base_field_F(y):
    """F(y) = y / d; divergence is 1 everywhere."""
    y = np.asarray(y, dtype=float)
    return y / y.shape[-1]


def field_G_batch(flow: Diffeomorphism, xs, base_field: Callable = base_field_F):
    """G(x) = |det dg/dx| * (df/dy) F(g(x)) for a batch of target points.

    Returns ``(base_points, g_vectors, log_dets)``. Since (dg/dx)^-1 equals
    df/dy at y = g(x), no matrix inverse is needed.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    y, jac, log_det = flow.pullback(xs)
    g = np.exp(log_det)[:, None] * np.einsum("nij,nj->ni", jac, base_field(y))
    bad = ~np.all(np.isfinite(g), axis=1) | ~np.isfinite(log_det)
    if np.any(bad):
        raise FieldEvaluationError(xs[np.flatnonzero(bad)[0]])
    return y, g, log_det


def field_G(flow: Diffeomorphism, x, base_field: Callable = base_field_F) -> FieldSample:
    x = np.asarray(x, dtype=float)
    y, g, log_det = field_G_batch(flow, x[None], base_field)
    return FieldSample(x, y[0], g[0], float(log_det[0]))


def dot_G_normal(sample: FieldSample, unit_normal) -> float:
    return float(np.dot(sample.g_vector, unit_normal))


def divergence_fd(vector_field: Callable, x, step: float = 1e-4) -> float:
    """Central-difference divergence at ``x``.

    ``vector_field`` maps an (n, d) batch of points to an (n, d) batch of vectors.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    d = len(x)
    shifts = step * np.eye(d)
    values = np.asarray(vector_field(np.vstack([x + shifts, x - shifts])))
    return float(np.trace(values[:d] - values[d:]) / (2.0 * step))


def g_field(flow: Diffeomorphism, base_field: Callable = base_field_F) -> Callable:
    """G as a plain batch callable, for use with :func:`divergence_fd`."""
    return lambda xs: field_G_batch(flow, xs, base_field)[1]
