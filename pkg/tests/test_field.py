import numpy as np
import pytest

from fluxcdf.field import (
    base_field_F, divergence_fd, dot_G_normal, field_G, field_G_batch, g_field,
)
from fluxcdf.flows import FlowSpec, make_flow, sample
from fluxcdf.geometry import weighted_normal

from conftest import builtin_specs, coupling_adapter


def test_base_field_examples():
    assert np.allclose(base_field_F([1.0, 1.0]), [0.5, 0.5])
    assert np.allclose(base_field_F(np.zeros(3)), 0)


def test_base_field_divergence(rng):
    for d in (2, 3, 5):
        x = rng.standard_normal(d)
        assert divergence_fd(base_field_F, x, 1e-5) == pytest.approx(1.0, abs=1e-6)


def test_divergence_rejects_bad_step():
    with pytest.raises(ValueError):
        divergence_fd(base_field_F, np.zeros(2), 0.0)


def test_identity_field():
    flow = make_flow(FlowSpec("identity", 3))
    x = np.array([0.2, 0.4, 0.9])
    assert np.allclose(field_G(flow, x).g_vector, x / 3)
    assert divergence_fd(g_field(flow), x) == pytest.approx(1.0, abs=1e-9)


def test_affine_field_by_hand():
    # g(x) = x/2, |J| = 1/4, J^-1 = 2I, F(g(x)) = x/4  =>  G = x/8
    flow = make_flow(FlowSpec("affine", 2, {"matrix": [[2, 0], [0, 2]]}))
    x = np.array([1.0, 0.6])
    s = field_G(flow, x)
    assert np.allclose(s.g_vector, x / 8)
    assert np.allclose(s.base_point, x / 2)
    assert s.log_det == pytest.approx(np.log(0.25))


def test_dot_examples():
    flow = make_flow(FlowSpec("identity", 2))
    s = field_G(flow, [0.5, 0.5])
    assert dot_G_normal(s, [1.0, 0.0]) == pytest.approx(0.25)
    perp = np.array([-s.g_vector[1], s.g_vector[0]]) / np.linalg.norm(s.g_vector)
    assert dot_G_normal(s, perp) == pytest.approx(0.0, abs=1e-15)


def test_dot_matches_explicit_solve(rng):
    flow = coupling_adapter(3)
    for x in sample(flow, rng, 20):
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        s = field_G(flow, x)
        # J = dg/dx by finite differences, then G = |J| J^-1 F(g(x)) by a linear solve
        h = 1e-6
        jac = np.stack([(flow.inverse(x + h * e) - flow.inverse(x - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
        g_solve = abs(np.linalg.det(jac)) * np.linalg.solve(jac, base_field_F(flow.inverse(x)))
        assert dot_G_normal(s, n) == pytest.approx(n @ g_solve, rel=1e-5, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("kind", list(builtin_specs(2)))
def test_divergence_of_G_is_density(kind, d):
    flow = make_flow(builtin_specs(d)[kind])
    rng = np.random.default_rng(d)
    ys = rng.uniform(0.05, 0.95, size=(100, d))
    xs = flow.forward(ys)
    field = g_field(flow)
    for x in xs:
        div = divergence_fd(field, x, 1e-4)
        target = np.exp(flow.log_abs_det_jacobian_inverse(x))
        assert abs(div - target) <= max(1e-3 * abs(target), 1e-6)


def test_G_homogeneous_in_F(rng):
    flow = coupling_adapter(3)
    xs = sample(flow, rng, 10)
    _, g1, _ = field_G_batch(flow, xs)
    _, g2, _ = field_G_batch(flow, xs, lambda y: 2 * base_field_F(y))
    assert np.array_equal(g2, 2 * g1)


def test_pullback_converges(rng):
    """Base-space flux of a mapped small simplex approaches G . dS as it shrinks."""
    flow = coupling_adapter(3)
    x0 = sample(flow, rng, 1)[0]
    offsets = rng.standard_normal((3, 3)) * 0.2
    errs, rel = [], []
    for k in range(6):
        tri = x0 + offsets / 2**k
        base_tri = flow.inverse(tri)
        base_flux = base_field_F(base_tri.mean(axis=0)) @ weighted_normal(base_tri)
        s = field_G(flow, tri.mean(axis=0))
        target_flux = s.g_vector @ weighted_normal(tri)
        errs.append(abs(base_flux - target_flux))
        rel.append(errs[-1] / np.linalg.norm(weighted_normal(tri)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.0), orders
    # flux error per unit area also vanishes, so the agreement is not just area shrinkage
    assert np.all(np.diff(rel) < 0) and rel[-1] < rel[0] / 16


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_non_finite_jacobian_reports_point():
    from fluxcdf.field import FieldEvaluationError

    flow = make_flow(FlowSpec("elementwise", 2, {"map": "logistic"}))
    with pytest.raises(FieldEvaluationError) as err:
        field_G_batch(flow, np.array([[3.0, 0.5]]))
    assert np.allclose(err.value.point, [3.0, 0.5])
