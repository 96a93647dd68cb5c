"""Invertible maps from the uniform unit cube to target space.

Every flow works on batches: ``forward`` and ``inverse`` take arrays of
shape (n, d) (a single length-d point is also accepted). Jacobians are
analytic, assembled by the chain rule layer by layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_ndtr, ndtr, ndtri

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class FlowDomainError(ValueError):
    pass


def _as_batch(a) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=float)
    return (a[None], True) if a.ndim == 1 else (a, False)


class Diffeomorphism:
    """Base class. Subclasses implement the ``_``-prefixed batch methods.

    ``_jacobian(y)`` returns ``(x, J)`` with ``J[n] = df/dy`` at ``y[n]``;
    ``_logdet(y)`` returns ``log|det df/dy|``.
    """

    dim: int
    # True when the flow maps the open cube onto all of R^d.
    full_support: bool = False

    def _forward(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _inverse(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _jacobian(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _logdet(self, y: np.ndarray) -> np.ndarray:
        _, jac = self._jacobian(y)
        return np.linalg.slogdet(jac)[1]

    # -- public API, single points or batches -------------------------------

    def forward(self, y):
        y, single = _as_batch(y)
        x = self._forward(y)
        return x[0] if single else x

    def inverse(self, x):
        x, single = _as_batch(x)
        y = self._inverse(x)
        return y[0] if single else y

    def jacobian_forward(self, y):
        y, single = _as_batch(y)
        _, jac = self._jacobian(y)
        return jac[0] if single else jac

    def log_abs_det_jacobian_inverse(self, x):
        x, single = _as_batch(x)
        out = self._logdet_inverse(x)
        return float(out[0]) if single else out

    def _logdet_inverse(self, x: np.ndarray) -> np.ndarray:
        return self._inverse_logdet(x)[1]

    def _inverse_logdet(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(g(x), log|det dg/dx|)`` in one pass."""
        y = self._inverse(x)
        return y, -self._logdet(y)

    def pullback(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(y, df/dy at y, log|det dg/dx|)`` for a batch of target points, y = g(x)."""
        y = self._inverse(x)
        _, jac = self._jacobian(y)
        return y, jac, -np.linalg.slogdet(jac)[1]


class Identity(Diffeomorphism):
    def __init__(self, dim: int):
        self.dim = dim

    def _forward(self, y):
        return y.copy()

    def _inverse(self, x):
        return x.copy()

    def _jacobian(self, y):
        return y.copy(), np.broadcast_to(np.eye(self.dim), (len(y), self.dim, self.dim)).copy()

    def _logdet(self, y):
        return np.zeros(len(y))


class Affine(Diffeomorphism):
    """x = A y + b."""

    def __init__(self, matrix, offset=None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.dim = self.matrix.shape[0]
        self.offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        sign, logdet = np.linalg.slogdet(self.matrix)
        if sign == 0 or abs(np.exp(logdet)) <= 1e-12:
            raise ValueError("affine matrix is singular")
        self._log_abs_det = float(logdet)
        self._inv = np.linalg.inv(self.matrix)

    def _forward(self, y):
        return y @ self.matrix.T + self.offset

    def _inverse(self, x):
        return (x - self.offset) @ self._inv.T

    def _jacobian(self, y):
        return self._forward(y), np.broadcast_to(self.matrix, (len(y), self.dim, self.dim)).copy()

    def _logdet(self, y):
        return np.full(len(y), self._log_abs_det)


class Elementwise(Diffeomorphism):
    """Per-coordinate monotone map ``x = shift + scale * h(y)``.

    ``h`` is ``logit`` (open cube onto R^d) or ``logistic`` (its inverse).
    """

    MAPS = ("logit", "logistic")

    def __init__(self, dim: int, kind: str = "logit", scale=1.0, shift=0.0):
        if kind not in self.MAPS:
            raise ValueError(f"unknown elementwise map {kind!r}")
        self.dim = dim
        self.kind = kind
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (dim,)).copy()
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), (dim,)).copy()
        if np.any(self.scale <= 0):
            raise ValueError("elementwise scale must be positive")
        self.full_support = kind == "logit"

    def _h(self, y):
        if self.kind == "logit":
            if np.any((y <= 0) | (y >= 1)):
                raise FlowDomainError("logit needs coordinates in (0, 1)")
            return np.log(y) - np.log1p(-y), 1.0 / (y * (1.0 - y))
        s = expit(y)
        return s, s * (1.0 - s)

    def _forward(self, y):
        h, _ = self._h(y)
        return self.shift + self.scale * h

    def _inverse(self, x):
        u = (x - self.shift) / self.scale
        if self.kind == "logit":
            return expit(u)
        # outside the range of the logistic map there is no preimage
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where((u > 0) & (u < 1), u, np.nan)
            return np.log(u) - np.log1p(-u)

    def _diag(self, y):
        h, dh = self._h(y)
        return self.shift + self.scale * h, self.scale * dh

    def _jacobian(self, y):
        x, diag = self._diag(y)
        jac = np.zeros((len(y), self.dim, self.dim))
        idx = np.arange(self.dim)
        jac[:, idx, idx] = diag
        return x, jac

    def _logdet(self, y):
        _, diag = self._diag(y)
        return np.log(diag).sum(axis=1)


def _softplus(a):
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


class _Perceptron:
    """Two-layer map u -> W2 softplus(W1 u + b1) + b2 with seeded weights."""

    def __init__(self, rng: np.random.Generator, n_in: int, hidden: int, n_out: int, scale: float):
        def draw(shape, fan_in):
            return scale * rng.uniform(-0.5, 0.5, size=shape) / np.sqrt(fan_in)

        self.w1 = draw((hidden, n_in), n_in)
        self.b1 = draw(hidden, n_in)
        self.w2 = draw((n_out, hidden), hidden)
        self.b2 = draw(n_out, hidden)

    def __call__(self, u):
        pre = u @ self.w1.T + self.b1
        return _softplus(pre) @ self.w2.T + self.b2, pre

    def grad(self, pre):
        # (n, n_out, n_in)
        return np.einsum("oh,nh,hi->noi", self.w2, expit(pre), self.w1)


class AffineCoupling(Diffeomorphism):
    """x_b = y_b * exp(tanh(s(y_a))) + t(y_a), x_a = y_a.

    The conditioning block ``a`` is the first ceil(d/2) coordinates, or the
    last ceil(d/2) when ``flip`` is set.
    """

    def __init__(self, dim: int, hidden: int = 16, seed: int = 0, flip: bool = False, scale: float = 1.0):
        if dim < 2:
            raise ValueError("coupling needs d >= 2")
        self.dim = dim
        n_cond = (dim + 1) // 2
        order = np.arange(dim)[::-1] if flip else np.arange(dim)
        self.cond = np.sort(order[:n_cond])
        self.free = np.sort(order[n_cond:])
        rng = np.random.default_rng(seed)
        self.s_net = _Perceptron(rng, len(self.cond), hidden, len(self.free), scale)
        self.t_net = _Perceptron(rng, len(self.cond), hidden, len(self.free), scale)

    def _st(self, ya):
        s_raw, s_pre = self.s_net(ya)
        t, t_pre = self.t_net(ya)
        return np.tanh(s_raw), t, s_pre, t_pre

    def _forward(self, y):
        ya = y[:, self.cond]
        s, t, _, _ = self._st(ya)
        x = y.copy()
        x[:, self.free] = y[:, self.free] * np.exp(s) + t
        return x

    def _inverse(self, x):
        return self._inverse_logdet(x)[0]

    def _inverse_logdet(self, x):
        s, t, _, _ = self._st(x[:, self.cond])
        y = x.copy()
        y[:, self.free] = (x[:, self.free] - t) * np.exp(-s)
        return y, -s.sum(axis=1)

    def _jacobian(self, y):
        ya, yb = y[:, self.cond], y[:, self.free]
        s, t, s_pre, t_pre = self._st(ya)
        es = np.exp(s)
        x = y.copy()
        x[:, self.free] = yb * es + t
        n = len(y)
        jac = np.zeros((n, self.dim, self.dim))
        jac[:, self.cond, self.cond] = 1.0
        jac[:, self.free, self.free] = es
        ds = self.s_net.grad(s_pre) * ((yb * es) * (1.0 - s**2))[:, :, None]
        cross = ds + self.t_net.grad(t_pre)
        jac[np.ix_(np.arange(n), self.free, self.cond)] = cross
        return x, jac

    def _logdet(self, y):
        s, _, _, _ = self._st(y[:, self.cond])
        return s.sum(axis=1)


class Composition(Diffeomorphism):
    """Applies ``layers[0]`` first."""

    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise ValueError("composition needs at least one layer")
        self.dim = self.layers[0].dim
        if any(l.dim != self.dim for l in self.layers):
            raise ValueError("composed flows must share a dimension")
        self.full_support = self.layers[0].full_support

    def _forward(self, y):
        for layer in self.layers:
            y = layer._forward(y)
        return y

    def _inverse(self, x):
        for layer in reversed(self.layers):
            x = layer._inverse(x)
        return x

    def _inverse_logdet(self, x):
        total = np.zeros(len(x))
        for layer in reversed(self.layers):
            x, ld = layer._inverse_logdet(x)
            total += ld
        return x, total

    def _jacobian(self, y):
        jac = None
        for layer in self.layers:
            y, j = layer._jacobian(y)
            jac = j if jac is None else j @ jac
        return y, jac

    def _logdet(self, y):
        total = np.zeros(len(y))
        for layer in self.layers:
            total += layer._logdet(y)
            y = layer._forward(y)
        return total


class GaussianBaseAdapter(Diffeomorphism):
    """Turns a flow with standard-normal base into one with uniform base.

    f(y) = child(Phi^-1(y)), so g(x) = Phi(child^-1(x)). Log-determinants are
    computed from the latent z directly instead of round-tripping through y,
    which keeps tails accurate.
    """

    full_support = True

    def __init__(self, child: Diffeomorphism):
        self.child = child
        self.dim = child.dim

    @staticmethod
    def _quantile(y):
        if np.any((y <= 0) | (y >= 1)):
            raise FlowDomainError("Gaussian quantile needs coordinates in (0, 1)")
        return ndtri(y)

    @staticmethod
    def _log_pdf(z):
        return -0.5 * z**2 - LOG_SQRT_2PI

    def _forward(self, y):
        return self.child._forward(self._quantile(y))

    def _inverse(self, x):
        return ndtr(self.child._inverse(x))

    def _jacobian(self, y):
        z = self._quantile(y)
        x, jac = self.child._jacobian(z)
        return x, jac * np.exp(-self._log_pdf(z))[:, None, :]

    def _logdet(self, y):
        z = self._quantile(y)
        return self.child._logdet(z) - self._log_pdf(z).sum(axis=1)

    def _inverse_logdet(self, x):
        z, child_ld = self.child._inverse_logdet(x)
        return ndtr(z), self._log_pdf(z).sum(axis=1) + child_ld

    def pullback(self, x):
        z = self.child._inverse(x)
        _, jac_child = self.child._jacobian(z)
        log_pdf = self._log_pdf(z)
        jac = jac_child * np.exp(-log_pdf)[:, None, :]
        logdet = log_pdf.sum(axis=1) - np.linalg.slogdet(jac_child)[1]
        return ndtr(z), jac, logdet

    def log_cdf_latent(self, x):
        """Per-coordinate log Phi(z); handy when y saturates at 1."""
        return log_ndtr(self.child._inverse(np.atleast_2d(x)))


# ------------------------------------------------------------------- specs


FLOW_KINDS = ("identity", "affine", "elementwise", "coupling", "composition", "gaussian_base_adapter")


@dataclass
class FlowSpec:
    """JSON-serializable description of a built-in flow.

    Parameters by kind:
      affine       matrix, offset
      elementwise  map ("logit" | "logistic"), scale, shift
      coupling     hidden, layers, scale, flip (layers alternate the split)
    ``composition`` and ``gaussian_base_adapter`` take ``children``.
    """

    kind: str
    dim: int
    params: dict = field(default_factory=dict)
    seed: int = 0
    children: list["FlowSpec"] = field(default_factory=list)
    name: str | None = None

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")
        self.children = [c if isinstance(c, FlowSpec) else FlowSpec.from_dict(c) for c in self.children]

    @property
    def label(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "params": self.params, "seed": self.seed}
        if self.children:
            out["children"] = [c.to_dict() for c in self.children]
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FlowSpec":
        return cls(
            kind=data["kind"],
            dim=int(data["dim"]),
            params=dict(data.get("params", {})),
            seed=int(data.get("seed", 0)),
            children=[cls.from_dict(c) for c in data.get("children", [])],
            name=data.get("name"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "FlowSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_flow(spec: FlowSpec) -> Diffeomorphism:
    d, p = spec.dim, spec.params
    if spec.kind == "identity":
        return Identity(d)
    if spec.kind == "affine":
        matrix = np.asarray(p.get("matrix", np.eye(d)), dtype=float)
        if matrix.shape != (d, d):
            raise ValueError(f"affine matrix must be {d}x{d}")
        offset = np.asarray(p.get("offset", np.zeros(d)), dtype=float)
        if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(offset))):
            raise ValueError("affine parameters must be finite")
        return Affine(matrix, offset)
    if spec.kind == "elementwise":
        return Elementwise(d, p.get("map", "logit"), p.get("scale", 1.0), p.get("shift", 0.0))
    if spec.kind == "coupling":
        layers = int(p.get("layers", 1))
        flip = bool(p.get("flip", False))
        couplings = [
            AffineCoupling(d, int(p.get("hidden", 16)), spec.seed + i, flip != (i % 2 == 1), float(p.get("scale", 1.0)))
            for i in range(layers)
        ]
        return couplings[0] if layers == 1 else Composition(couplings)
    if spec.kind == "composition":
        return Composition([make_flow(c) for c in spec.children])
    if spec.kind == "gaussian_base_adapter":
        if len(spec.children) != 1:
            raise ValueError("gaussian_base_adapter wraps exactly one child")
        return GaussianBaseAdapter(make_flow(spec.children[0]))
    raise ValueError(f"unknown flow kind {spec.kind!r}")


def sample(flow: Diffeomorphism, rng: np.random.Generator, n: int) -> np.ndarray:
    """Push uniform cube samples through the flow."""
    if n == 0:
        return np.empty((0, flow.dim))
    y = rng.random((n, flow.dim))
    if flow.full_support:
        # keep y strictly inside the open cube for logit / quantile maps
        y = np.clip(y, 1e-300, None)
    return flow.forward(y)


def density(flow: Diffeomorphism, x):
    """Target density |det dg/dx| times the indicator that g(x) lies in the cube."""
    x, single = _as_batch(x)
    y, log_det = flow._inverse_logdet(x)
    inside = np.all((y >= 0.0) & (y <= 1.0), axis=1)
    out = np.where(inside, np.exp(np.where(inside, log_det, -np.inf)), 0.0)
    return float(out[0]) if single else out


def is_affine(flow: Diffeomorphism) -> bool:
    if isinstance(flow, (Identity, Affine)):
        return True
    if isinstance(flow, Composition):
        return all(is_affine(l) for l in flow.layers)
    return False
