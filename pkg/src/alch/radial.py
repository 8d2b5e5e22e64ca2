"""Radial ODEs along the coordinate lines ``r -> (r, x)``.

Parallel transport is integrated with classical RK4 at a fixed step; the whole
line bundle (every base point, every frame vector) advances in one vectorised
``lax.scan``.  Orthonormality drift is measured, never corrected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from .chart import Chart, Metric, TensorField, g_norm
from .rates import Series

__all__ = [
    "RadialState",
    "RadialTrajectory",
    "FrameDriftError",
    "transport_parallel",
    "transport_trajectory",
    "transport_error_estimate",
    "shape_operator",
    "shape_eigenvalues",
    "riccati_residual",
    "jacobi_residual",
    "JacobiReport",
    "rk4_linear",
]


class FrameDriftError(RuntimeError):
    """Transported frame lost orthonormality beyond tolerance."""


@dataclass(frozen=True, eq=False)
class RadialState:
    """Per-base-point frames ``{∂r, E_0, ..., E_2n}`` (columns) at one radius."""

    base_points: np.ndarray
    r: float
    frame: np.ndarray
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        fr = np.array(self.frame, dtype=float)
        bp = np.atleast_2d(np.array(self.base_points, dtype=float))
        D = bp.shape[1] + 1
        if fr.shape[-2:] != (D, D) or fr.shape[0] != bp.shape[0]:
            raise ValueError(f"frame must have shape (P, {D}, {D})")
        if np.any(fr[:, :, 0] != np.eye(D)[0]) or np.any(fr[:, 0, 1:] != 0.0):
            raise ValueError("first frame vector must be ∂r and the rest tangential")
        fr.setflags(write=False)
        bp.setflags(write=False)
        object.__setattr__(self, "frame", fr)
        object.__setattr__(self, "base_points", bp)

    @property
    def tangential(self) -> np.ndarray:
        return self.frame[:, :, 1:]

    @classmethod
    def from_tangential(cls, base_points, r, vectors, **extras) -> "RadialState":
        v = np.asarray(vectors, dtype=float)
        P, D, m = v.shape
        fr = np.zeros((P, D, m + 1))
        fr[:, 0, 0] = 1.0
        fr[:, :, 1:] = v
        return cls(base_points, float(r), fr, dict(extras))


@dataclass(frozen=True, eq=False)
class RadialTrajectory:
    """Transported tangential vectors at every step: ``frames[k, p, :, j]``."""

    base_points: np.ndarray
    r: np.ndarray
    frames: np.ndarray
    h_r: float
    drift: float
    drift_per_unit_r: float

    def index_of(self, r_values) -> np.ndarray:
        idx = np.rint((np.asarray(r_values) - self.r[0]) / self.h_r).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.r.size) or np.any(np.abs(self.r[idx] - r_values) > 1e-9):
            raise ValueError("requested radii are not on the integration grid")
        return idx

    def at(self, r_values) -> np.ndarray:
        return self.frames[self.index_of(r_values)]

    def state(self, k: int = -1) -> RadialState:
        return RadialState.from_tangential(self.base_points, self.r[k], self.frames[k])

    def recombine(self, coeffs: np.ndarray) -> "RadialTrajectory":
        """Frames of the initial vectors ``V0 @ coeffs`` (transport is linear)."""
        fr = np.einsum("kpdm,pmj->kpdj", self.frames, coeffs, optimize=True)
        return RadialTrajectory(self.base_points, self.r, fr, self.h_r, self.drift, self.drift_per_unit_r)


def rk4_linear(A_fn, y0, t0: float, h: float, nsteps: int):
    """RK4 for ``y' = A(t) y`` with a jax-traceable ``A_fn(t) -> matrix-like op``.

    ``A_fn(t, y)`` returns the right-hand side.  Returns all ``nsteps + 1`` states.
    """

    def step(carry, _):
        t, y = carry
        k1 = A_fn(t, y)
        k2 = A_fn(t + h / 2, y + h / 2 * k1)
        k3 = A_fn(t + h / 2, y + h / 2 * k2)
        k4 = A_fn(t + h, y + h * k3)
        y1 = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return (t + h, y1), y1

    _, ys = jax.lax.scan(step, (jnp.asarray(t0, dtype=jnp.float64), jnp.asarray(y0)), None, length=nsteps)
    return jnp.concatenate([jnp.asarray(y0)[None], ys], axis=0)


def _transport_program(model):
    """Cached jitted integrator for one model."""
    cache = model.__dict__.setdefault("_transport_cache", {})
    if "run" in cache:
        return cache["run"]
    gam_fn = jax.vmap(model.radial_connection_fn)

    def run(x, V0, r0, h, nsteps):
        def rhs(r, V):
            pts = jnp.concatenate([jnp.full((x.shape[0], 1), r), x], axis=1)
            return -jnp.einsum("pij,pjm->pim", gam_fn(pts), V)

        return rk4_linear(rhs, V0, r0, h, nsteps)

    cache["run"] = jax.jit(run, static_argnums=(4,))
    return cache["run"]


def transport_trajectory(model, base_points, vectors0, r0: float, r_target: float, h_r: float = 1e-2,
                         drift_tol: float = 1e-8, chart: Chart | None = None) -> RadialTrajectory:
    """Parallel transport of tangential vectors ``vectors0[p, :, j]`` from ``r0`` to ``r_target``."""
    if chart is not None and not (chart.r_min - 1e-12 <= r_target <= chart.r_max + 1e-12):
        raise ValueError(f"r_target {r_target} outside chart [{chart.r_min}, {chart.r_max}]")
    if r_target < r0:
        raise ValueError("transport runs outward only")
    nsteps = int(round((r_target - r0) / h_r))
    if abs(nsteps * h_r - (r_target - r0)) > 1e-9:
        raise ValueError("r_target - r0 must be an integer number of steps")
    x = np.atleast_2d(np.asarray(base_points, dtype=float))
    V0 = np.asarray(vectors0, dtype=float)
    run = _transport_program(model)
    frames = np.asarray(run(jnp.asarray(x), jnp.asarray(V0), float(r0), float(h_r), nsteps))
    r = r0 + h_r * np.arange(nsteps + 1)
    drift = _frame_drift(model, x, r, frames)
    length = max(r_target - r0, 1e-300)
    per_unit = drift / length if nsteps else 0.0
    if per_unit > drift_tol:
        raise FrameDriftError(f"frame drift {per_unit:.3e} per unit r exceeds {drift_tol:.1e} (h_r = {h_r})")
    return RadialTrajectory(x, r, frames, float(h_r), drift, per_unit)


def _frame_drift(model, x, r, frames, every: int = 25) -> float:
    """Max change of the Gram matrix ``E^T g E`` relative to its initial value."""
    idx = np.unique(np.r_[np.arange(0, r.size, every), r.size - 1])
    P = x.shape[0]
    pts = np.concatenate([np.repeat(r[idx], P)[:, None], np.tile(x, (idx.size, 1))], axis=1)
    G = model.metric(pts).reshape(idx.size, P, *frames.shape[-2:-1], frames.shape[-2])
    F = frames[idx]
    gram = np.einsum("kpam,kpab,kpbn->kpmn", F, G, F, optimize=True)
    return float(np.max(np.abs(gram - gram[0:1])))


def transport_parallel(model, state: RadialState, r_target: float, h_r: float = 1e-2,
                       drift_tol: float = 1e-8, chart: Chart | None = None) -> RadialState:
    """Transport ``state`` to ``r_target``; ``∂r`` stays fixed exactly."""
    traj = transport_trajectory(model, state.base_points, state.tangential, state.r, r_target, h_r,
                                drift_tol, chart)
    return RadialState.from_tangential(state.base_points, r_target, traj.frames[-1],
                                       drift_per_unit_r=traj.drift_per_unit_r)


def transport_error_estimate(model, state: RadialState, r_target: float, h_r: float = 1e-2) -> float:
    """Richardson-style check: max difference of the frames at ``h_r`` and ``h_r/2``."""
    a = transport_parallel(model, state, r_target, h_r, drift_tol=np.inf)
    b = transport_parallel(model, state, r_target, h_r / 2, drift_tol=np.inf)
    return float(np.max(np.abs(a.frame - b.frame)))


# -- shape operator -------------------------------------------------------------

def shape_operator(g: Metric, gam: TensorField, check: bool = True) -> TensorField:
    """``S^i_j = Γ^i_{jr}`` on the tangent spaces of the level sets (slots ``ud``)."""
    if not g.gauss:
        raise ValueError("shape operator needs a Gauss-form metric")
    S = np.array(gam.components[..., 1:, 1:, 0])
    if check:
        gr = g.components[..., 1:, 1:]
        low = np.einsum("...ik,...kj->...ij", gr, S)
        scale = np.max(np.abs(low)) + 1e-300
        if np.max(np.abs(low - np.swapaxes(low, -1, -2))) > 1e-8 * scale:
            raise ValueError("shape operator is not g_r-self-adjoint")
    return TensorField(S, "ud", spacing=g.spacing, chart=g.chart)


def shape_eigenvalues(S: TensorField) -> np.ndarray:
    """Sorted (real parts of) eigenvalues per grid point."""
    return np.sort(np.linalg.eigvals(S.components).real, axis=-1)


def tangential_metric(g: Metric) -> Metric:
    return Metric(g.components[..., 1:, 1:], spacing=g.spacing, chart=g.chart)


def _curvature_operator(g: Metric, R: TensorField) -> np.ndarray:
    """``K^i_j`` with ``g_r(K e_j, e_m) = R(∂r, e_j, ∂r, e_m)`` (tangential block)."""
    gri = np.linalg.inv(g.components[..., 1:, 1:])
    Rr = R.components[..., 0, 1:, 0, 1:]
    return np.einsum("...im,...jm->...ij", gri, Rr)


def riccati_residual(S: TensorField, R: TensorField, g: Metric, gam: TensorField | None = None,
                     r_values=None, interior: tuple | None = None) -> Series:
    """Per-slice max of ``‖∂r S + [Γ_r, S] + S² + R(∂r,·)∂r‖_g``.

    ``S`` lives on a grid whose axis 0 is ``r`` with spacing ``S.spacing[0]``.
    The connection correction ``[Γ_r, S]`` vanishes identically in Gauss form but
    is evaluated when ``gam`` is given.  The two outer slices are dropped.
    """
    from .chart import partial_fd

    dS = partial_fd(S, 0, 1).components
    Sc = S.components
    res = dS + np.einsum("...ik,...kj->...ij", Sc, Sc) + _curvature_operator(g, R)
    if gam is not None:
        Gr = gam.components[..., 1:, 0, 1:]  # Γ^i_{r k}
        res = res + np.einsum("...ik,...kj->...ij", Gr, Sc) - np.einsum("...ik,...kj->...ij", Sc, Gr)
    sl = (slice(2, -2),) + (interior if interior is not None else ())
    gr = Metric(g.components[sl][..., 1:, 1:])
    norms = g_norm(gr, TensorField(res[sl], "ud"))
    k = norms.shape[0]
    if r_values is None:
        r_values = np.arange(Sc.shape[0]) * S.spacing[0]
    r_values = np.asarray(r_values)[2:-2]
    return Series("riccati", r_values, np.max(norms.reshape(k, -1), axis=1))


@dataclass(frozen=True, eq=False)
class JacobiReport:
    r: np.ndarray
    norm: np.ndarray
    first_order: np.ndarray
    second_order: np.ndarray

    def max_residual(self) -> float:
        return float(max(np.max(self.first_order), np.max(self.second_order)))


def jacobi_residual(model, base_point, v, r_values) -> JacobiReport:
    """Residuals of ``∇_∂r Y = S Y`` and ``∇_∂r∇_∂r Y = −R(∂r, Y)∂r`` for ``Y = (0, v)``.

    The normal Jacobi field has constant coordinate components along the line,
    so both identities are evaluated pointwise from metric jets.
    """
    from .curvature import christoffel, riemann

    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.any(v != 0.0):
        raise ValueError("v must be nonzero")
    r = np.asarray(r_values, dtype=float).reshape(-1)
    x = np.asarray(base_point, dtype=float).reshape(-1)
    if v.size != x.size:
        raise ValueError("v and base_point differ in dimension")
    pts = np.concatenate([r[:, None], np.tile(x, (r.size, 1))], axis=1)
    gj = model.metric_jet(pts, 2)
    g = Metric(gj[0], derivs=tuple(gj[1:]), gauss=True)
    gam = christoffel(g)
    R = riemann(g, gam)
    Y = np.concatenate([[0.0], v])
    G1, dG1 = gam.components, gam.derivs[0]
    Z = np.einsum("kij,j->ki", G1[:, :, 0, :], Y)  # ∇_∂r Y
    SY = np.einsum("kij,j->ki", G1[:, :, :, 0], Y)
    dZ = np.einsum("kij,j->ki", dG1[:, :, 0, :, 0], Y)
    nnY = dZ + np.einsum("kij,kj->ki", G1[:, :, 0, :], Z)
    # W^m = g^{mq} R(∂r, Y, ∂r, ∂q)
    W = np.einsum("kmq,kbq,b->km", g.inverse, R.components[:, 0, :, 0, :], Y)

    def gnorm(u):
        return np.sqrt(np.einsum("ka,kab,kb->k", u, g.components, u))

    return JacobiReport(r, gnorm(np.tile(Y, (r.size, 1))), gnorm(Z - SY), gnorm(nnY + W))
