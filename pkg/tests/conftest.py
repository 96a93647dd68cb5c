import numpy as np
import pytest

from fluxcdf.flows import FlowSpec, make_flow
from fluxcdf.geometry import convex_hull

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def sphere_hull(center, radius=1.0, n=20, seed=0):
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    dirs = rng.standard_normal((n, len(center)))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return convex_hull(center + radius * dirs)


def builtin_specs(d):
    """One spec per built-in kind; plain (cube-supported) flows and adapter-wrapped ones."""
    rng = np.random.default_rng(d)
    matrix = (np.eye(d) + 0.3 * rng.standard_normal((d, d))).tolist()
    return {
        "identity": FlowSpec("identity", d),
        "affine": FlowSpec("affine", d, {"matrix": matrix, "offset": [0.5] * d}),
        "logit": FlowSpec("elementwise", d, {"map": "logit", "scale": 0.8, "shift": 0.1}),
        "logistic": FlowSpec("elementwise", d, {"map": "logistic", "scale": 2.0, "shift": -1.0}),
        "coupling": FlowSpec("coupling", d, {"layers": 1, "hidden": 8}, seed=7),
        "composition": FlowSpec("composition", d, children=[
            FlowSpec("coupling", d, {"layers": 2, "hidden": 8}, seed=3),
            FlowSpec("affine", d, {"matrix": matrix}),
        ]),
        "adapter_identity": FlowSpec("gaussian_base_adapter", d, children=[FlowSpec("identity", d)]),
        "adapter_coupling": FlowSpec("gaussian_base_adapter", d, children=[
            FlowSpec("coupling", d, {"layers": 3, "hidden": 16}, seed=11),
        ]),
    }


def coupling_adapter(d, seed=7, layers=3):
    return make_flow(FlowSpec("gaussian_base_adapter", d, children=[
        FlowSpec("coupling", d, {"layers": layers, "hidden": 16}, seed=seed),
    ]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
