"""Built-in metric / almost-complex-structure families on Fermi charts.

Every model is given by two single-point functions ``metric(p)`` and ``J(p)``
of ``p = (r, x^1, ..., x^{2n+1})``.  Jets (coordinate derivatives) come either
from forward-mode autodiff or from nested five-point stencils of width ``h_x``.

Horospherical coordinates are ordered ``(r, x_1, y_1, ..., x_n, y_n, t)``.
The polar model (n = 1) uses the gnomonic chart ``q(x) = (1, x)/|(1, x)|`` of
the unit quaternions together with the right-invariant coframe
``σ = Im(dq · q̄)``, which satisfies ``dσ_1 = 2 σ_2∧σ_3`` cyclically.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import jax
import jax.numpy as jnp
import numpy as np

from .chart import FD_COEFFS, Chart, Metric, TensorField

jax.config.update("jax_enable_x64", True)

__all__ = ["ModelSpec", "GeometricModel", "build_model", "model_oracle", "OracleReport", "KINDS", "EXACT_KINDS"]

KINDS = ("cph_polar", "cph_horo", "perturbed_metric", "rotated_J")
EXACT_KINDS = ("cph_polar", "cph_horo")
KAPPA = 0.5
_CHUNK = 4096


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "cph_horo"
    n: int = 1
    a: float = 1.25
    eps: float = 0.0
    analytic_derivatives: bool = True
    bump_amplitude: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"model.kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("model.n must be an integer ≥ 1")
        object.__setattr__(self, "n", int(self.n))
        if self.kind == "cph_polar" and self.n != 1:
            raise ValueError("unsupported (kind, n) combination: cph_polar exists for n = 1 only")
        if self.kind in EXACT_KINDS:
            object.__setattr__(self, "eps", 0.0)
        else:
            if not self.a > 0:
                raise ValueError("model.a must be > 0")
            if not abs(self.eps) < 0.5:
                raise ValueError("model.eps must satisfy |eps| < 0.5")
        if not abs(self.bump_amplitude) < 1.0:
            raise ValueError("model.bump_amplitude must satisfy |amplitude| < 1")

    @property
    def dim_boundary(self) -> int:
        return 2 * self.n + 1

    @property
    def exact(self) -> bool:
        return self.kind in EXACT_KINDS

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "a": self.a, "eps": self.eps,
                "analytic_derivatives": self.analytic_derivatives,
                "bump_amplitude": self.bump_amplitude}


def _jblock(m: int, s1: float, s2: float):
    """Frame matrix of J on (N, T, X_1, Y_1, ..., X_n, Y_n): J N = s1 T, J X_k = s2 Y_k."""
    Jf = np.zeros((m, m))
    Jf[1, 0], Jf[0, 1] = s1, -s1
    for k in range(2, m, 2):
        Jf[k + 1, k], Jf[k, k + 1] = s2, -s2
    return jnp.asarray(Jf)


# -- horospherical family ------------------------------------------------------

def _horo_frame(p, n):
    """Coordinate components of the orthonormal frame (N, T, X_1, Y_1, ...)."""
    r = p[0]
    D = 2 * n + 2
    cols = [jnp.zeros(D).at[0].set(1.0), jnp.zeros(D).at[D - 1].set(jnp.exp(-r))]
    s = jnp.exp(-r / 2)
    for k in range(n):
        xk, yk = p[1 + 2 * k], p[2 + 2 * k]
        cols.append(s * jnp.zeros(D).at[1 + 2 * k].set(1.0).at[D - 1].set(-KAPPA * yk))
        cols.append(s * jnp.zeros(D).at[2 + 2 * k].set(1.0).at[D - 1].set(KAPPA * xk))
    return jnp.stack(cols, axis=1)


def _horo_metric(p, n):
    r = p[0]
    D = 2 * n + 2
    theta = jnp.zeros(D).at[D - 1].set(1.0)
    for k in range(n):
        theta = theta.at[1 + 2 * k].set(KAPPA * p[2 + 2 * k]).at[2 + 2 * k].set(-KAPPA * p[1 + 2 * k])
    flat = jnp.zeros(D).at[1: D - 1].set(1.0)
    G = jnp.exp(2 * r) * jnp.outer(theta, theta) + jnp.exp(r) * jnp.diag(flat)
    return G.at[0, 0].set(1.0)


# -- polar family ----------------------------------------------------------------

def _qmul(a, b):
    a0, a1, a2, a3 = a
    b0, b1, b2, b3 = b
    return jnp.array([a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
                      a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
                      a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
                      a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0])


def _qconj(a):
    return a * jnp.array([1.0, -1.0, -1.0, -1.0])


def _gnomonic(x):
    v = jnp.concatenate([jnp.ones(1), x])
    return v / jnp.sqrt(v @ v)


def sphere_coframe(x):
    """Right-invariant coframe at gnomonic coordinates ``x``: ``sigma[i, k] = σ_i(∂_k)``."""
    q = _gnomonic(x)
    dq = jax.jacfwd(_gnomonic)(x)
    qb = _qconj(q)
    return jnp.stack([_qmul(dq[:, k], qb)[1:] for k in range(3)], axis=1)


def _polar_metric(p):
    r = p[0]
    S = sphere_coframe(p[1:])
    G3 = jnp.sinh(r) ** 2 * jnp.outer(S[0], S[0]) + 4 * jnp.sinh(r / 2) ** 2 * (
        jnp.outer(S[1], S[1]) + jnp.outer(S[2], S[2]))
    return jnp.zeros((4, 4)).at[0, 0].set(1.0).at[1:, 1:].set(G3)


def _polar_frame(p):
    r = p[0]
    F = jnp.linalg.inv(sphere_coframe(p[1:]))  # columns are the dual fields X_i
    z = jnp.zeros(1)
    N = jnp.array([1.0, 0.0, 0.0, 0.0])
    T = jnp.concatenate([z, F[:, 0] / jnp.sinh(r)])
    X = jnp.concatenate([z, F[:, 1] / (2 * jnp.sinh(r / 2))])
    Y = jnp.concatenate([z, F[:, 2] / (2 * jnp.sinh(r / 2))])
    return jnp.stack([N, T, X, Y], axis=1)


# -- model object ------------------------------------------------------------------

def _fd_jacobian(f, h):
    """Five-point central difference of ``f`` in every coordinate direction.

    The stencil points are evaluated with one ``vmap`` so nesting this operator
    keeps the traced program small.
    """
    c = FD_COEFFS[1]
    shifts = np.array([k - 2 for k in range(5) if c[k] != 0.0], dtype=float)
    weights = np.array([c[k] for k in range(5) if c[k] != 0.0])

    def df(p):
        D = p.shape[0]
        offs = (shifts[:, None, None] * h * np.eye(D)[None]).reshape(-1, D)
        vals = jax.vmap(f)(p[None, :] + jnp.asarray(offs))
        vals = vals.reshape((shifts.size, D) + vals.shape[1:])
        out = jnp.tensordot(jnp.asarray(weights), vals, axes=(0, 0)) / h
        return jnp.moveaxis(out, 0, -1)

    return df


class GeometricModel:
    """A ModelSpec realised as single-point jax functions plus batched jets."""

    def __init__(self, spec: ModelSpec, h_x: float = 1e-3):
        self.spec = spec
        self.h_x = float(h_x)
        self.n = spec.n
        self.dim = 2 * spec.n + 2
        self._jitted = {}

    # single-point definitions
    def frame_fn(self, p):
        """Orthonormal frame (columns) in which J has its block form."""
        spec = self.spec
        if spec.kind == "cph_polar":
            return _polar_frame(p)
        E = _horo_frame(p, self.n)
        if spec.kind == "perturbed_metric":
            scale = jnp.ones(self.dim).at[1:].set(1.0 / jnp.sqrt(self._conformal(p)))
            E = E * scale[None, :]
        return E

    def _conformal(self, p):
        s = self.spec
        return 1.0 + s.eps * jnp.exp(-s.a * p[0]) * (1.0 + s.bump_amplitude * jnp.sin(p[1]))

    def metric_fn(self, p):
        spec = self.spec
        if spec.kind == "cph_polar":
            return _polar_metric(p)
        G = _horo_metric(p, self.n)
        if spec.kind == "perturbed_metric":
            F = self._conformal(p)
            G = (G * F).at[0, 0].set(1.0)
        return G

    def J_fn(self, p):
        spec = self.spec
        if spec.kind == "cph_polar":
            Jf = _jblock(4, 1.0, 1.0)
        else:
            Jf = _jblock(self.dim, 1.0, -1.0)
        if spec.kind == "rotated_J":
            alpha = spec.eps * jnp.exp(-spec.a * p[0])
            c, s = jnp.cos(alpha), jnp.sin(alpha)
            P = jnp.eye(self.dim).at[1, 1].set(c).at[2, 2].set(c).at[2, 1].set(s).at[1, 2].set(-s)
            Jf = P @ Jf @ P.T
        E = self.frame_fn(p)
        G = self.metric_fn(p)
        # E^{-1} = E^T G for a g-orthonormal frame
        return E @ Jf @ E.T @ G

    # batched evaluation ---------------------------------------------------------
    def _derivative(self, f):
        if self.spec.analytic_derivatives:
            return jax.jacfwd(f)
        return _fd_jacobian(f, self.h_x)

    def _compiled(self, which: str, order: int):
        key = (which, order)
        if key not in self._jitted:
            base = {"g": self.metric_fn, "J": self.J_fn, "E": self.frame_fn}[which]
            fns = [base]
            for _ in range(order):
                fns.append(self._derivative(fns[-1]))

            def all_orders(p):
                return tuple(f(p) for f in fns)

            self._jitted[key] = jax.jit(jax.vmap(all_orders))
        return self._jitted[key]

    def _evaluate(self, which, points, order):
        pts = np.asarray(points, dtype=float)
        lead = pts.shape[:-1]
        flat = pts.reshape(-1, self.dim)
        fn = self._compiled(which, order)
        parts = [fn(jnp.asarray(flat[i:i + _CHUNK])) for i in range(0, flat.shape[0], _CHUNK)]
        out = []
        for k in range(order + 1):
            arr = np.concatenate([np.asarray(p[k]) for p in parts], axis=0)
            out.append(arr.reshape(lead + arr.shape[1:]))
        return out

    def metric_jet(self, points, order: int = 0) -> list:
        """``[g, dg, d2g, ...]`` at ``points``; derivative axes trail."""
        return self._evaluate("g", points, order)

    def J_jet(self, points, order: int = 0) -> list:
        return self._evaluate("J", points, order)

    def frame(self, points) -> np.ndarray:
        return self._evaluate("E", points, 0)[0]

    def metric(self, points) -> np.ndarray:
        return self.metric_jet(points, 0)[0]

    def J(self, points) -> np.ndarray:
        return self.J_jet(points, 0)[0]

    @cached_property
    def radial_connection_fn(self):
        """Single-point map ``p -> Γ^i_{r j}(p)`` used by the radial integrators."""
        dmetric = self._derivative(self.metric_fn)

        def gam(p):
            G = self.metric_fn(p)
            dG = dmetric(p)  # dG[a, b, c] = d_c g_ab
            Gi = jnp.linalg.inv(G)
            low = dG[:, :, 0] + dG[:, 0, :] - dG[0, :, :].T  # [k, j]: d_r g_kj + d_j g_kr - d_k g_rj
            return 0.5 * Gi @ low

        return gam


def build_model(spec: ModelSpec, chart: Chart, jet_order: int = 2, r_values=None):
    """Sample ``(g, J)`` with jets on the chart grid.

    Returns ``(Metric, TensorField)``.  Both fields carry ``derivs`` up to
    ``jet_order`` and live on the grid ``(len(r), *chart.grid)``.
    """
    if chart.dim_boundary != spec.dim_boundary:
        raise ValueError(f"chart.dim_boundary = {chart.dim_boundary} but model needs {spec.dim_boundary}")
    if spec.kind == "cph_polar" and chart.r_min <= 0:
        raise ValueError("chart degeneracy: the polar model needs r_min > 0")
    model = GeometricModel(spec, chart.h_x)
    pts = chart.grid_points(r_values)
    gj = model.metric_jet(pts, jet_order)
    Jj = model.J_jet(pts, jet_order)
    spacing = chart.grid_spacing() if r_values is None else None
    g = Metric(gj[0], spacing=spacing, chart=chart, derivs=tuple(gj[1:]), gauss=True)
    check_compatible(g.components, Jj[0])
    J = TensorField(Jj[0], "ud", spacing=spacing, chart=chart, derivs=tuple(Jj[1:]))
    return g, J


def check_compatible(G, J, tol: float = 1e-12):
    """Raise unless ``J^2 = -Id`` and ``g(J., J.) = g`` pointwise (relative ``tol``)."""
    D = J.shape[-1]
    sq = np.einsum("...ab,...bc->...ac", J, J) + np.eye(D)
    Jn = np.max(np.abs(J), axis=(-1, -2))
    if np.any(np.max(np.abs(sq), axis=(-1, -2)) > tol * np.maximum(1.0, Jn**2)):
        raise ValueError("J^2 + Id ≠ 0 beyond tolerance")
    pull = np.einsum("...ka,...kl,...lb->...ab", J, G, J) - G
    scale = np.max(np.abs(G), axis=(-1, -2)) * np.maximum(1.0, Jn**2)
    if np.any(np.max(np.abs(pull), axis=(-1, -2)) > tol * scale):
        raise ValueError("incompatible J: g(J·,J·) ≠ g")


@dataclass(frozen=True)
class OracleReport:
    kind: str
    max_R_minus_R0: float
    max_nabla_J: float
    tolerance: float
    passed: bool
    wall_time: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def model_oracle(spec: ModelSpec, chart: Chart, tol: float | None = None) -> OracleReport:
    """Exactness check ``R = R0`` and ``∇J = 0`` over the evaluation sub-box."""
    import time

    from .curvature import christoffel, covariant_deriv_J, r0_tensor, riemann
    from .chart import g_norm

    if not spec.exact:
        raise ValueError("oracle only for exact kinds")
    if tol is None:
        tol = 1e-8 if spec.analytic_derivatives else 1e-4
    t0 = time.perf_counter()
    pts = chart.grid_points()[(slice(None),) + chart.interior]
    model = GeometricModel(spec, chart.h_x)
    gj = model.metric_jet(pts, 2)
    Jj = model.J_jet(pts, 1)
    g = Metric(gj[0], derivs=tuple(gj[1:]), gauss=True)
    J = TensorField(Jj[0], "ud", derivs=tuple(Jj[1:]))
    gam = christoffel(g)
    R = riemann(g, gam)
    R0 = r0_tensor(g, J)
    dR = TensorField(R.components - R0.components, "dddd")
    nJ = covariant_deriv_J(g, gam, J, 1)
    mR = float(np.max(g_norm(g, dR)))
    mJ = float(np.max(g_norm(g, nJ)))
    return OracleReport(spec.kind, mR, mJ, float(tol), bool(mR < tol and mJ < tol), time.perf_counter() - t0)
