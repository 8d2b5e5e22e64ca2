"""The β_r form, the vector e₀, admissible and J-admissible frames.

Frames are stored through coefficients: transport is linear, so every frame
built from the initial candidate frame ``V0`` is ``V0 @ C`` for a constant
``C`` per base point, and its transported version is ``traj.frames @ C``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .chart import Chart, Metric, TensorField
from .extrapolate import ExtrapolationResult, extrapolate_limit
from .radial import RadialTrajectory, transport_trajectory
from .rates import Series

__all__ = [
    "LineSamples",
    "sample_lines",
    "initial_frame",
    "BetaSeries",
    "beta_series",
    "extract_e0",
    "AdmissibleFrame",
    "admissible_frame",
    "j_admissible_frame",
    "axis_order",
]


@dataclass(eq=False)
class LineSamples:
    """Model data on the output r-slices of every radial line."""

    model: object
    chart: Chart
    r: np.ndarray
    x: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray
    J: np.ndarray
    dJ: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.g.shape[:2]

    @cached_property
    def metric(self) -> Metric:
        return Metric(self.g, derivs=(self.dg, self.d2g), gauss=True)

    @cached_property
    def christoffel(self) -> TensorField:
        from .curvature import christoffel

        return christoffel(Metric(self.g, derivs=(self.dg,), gauss=True))

    @cached_property
    def riemann(self) -> TensorField:
        from .curvature import riemann

        return riemann(self.metric, self.christoffel)

    @cached_property
    def nabla_r_J(self) -> np.ndarray:
        """``(∇_∂r J)^a_b`` at every sample."""
        G1 = self.christoffel.components
        return (self.dJ[..., 0] + np.einsum("...am,...mb->...ab", G1[..., :, 0, :], self.J)
                - np.einsum("...mb,...am->...ab", G1[..., :, 0, :], self.J))

    @property
    def J_dr(self) -> np.ndarray:
        return self.J[..., :, 0]


def sample_lines(model, chart: Chart) -> LineSamples:
    """Metric (second jets) and J (first jets) on ``chart.r_values × base points``."""
    x = chart.base_points
    r = chart.r_values
    P = x.shape[0]
    pts = np.empty((r.size, P, chart.dim))
    pts[..., 0] = r[:, None]
    pts[..., 1:] = x[None]
    g, dg, d2g = model.metric_jet(pts, 2)
    J, dJ = model.J_jet(pts, 1)
    return LineSamples(model, chart, r, x, g, dg, d2g, J, dJ)


def axis_order(dim: int, seed: int) -> tuple:
    """The ``seed``-th permutation (lexicographic, cyclic) of the coordinate axes."""
    perms = list(itertools.permutations(range(dim)))
    return perms[int(seed) % len(perms)]


def _gram_schmidt(vectors, G, first=None, tol=1e-6, need=None):
    """Modified Gram–Schmidt in the inner product ``G`` (per base point).

    ``vectors``: (P, D, k) candidates in order; ``first``: optional (P, D)
    vector kept as the first output.  Returns (P, D, need) or raises when a
    point runs out of independent candidates.
    """
    P, D, k = vectors.shape
    need = need if need is not None else k + (first is not None)
    out = np.zeros((P, D, need))
    count = np.zeros(P, dtype=int)

    def inner(a, b):
        return np.einsum("pa,pab,pb->p", a, G, b)

    if first is not None:
        out[:, :, 0] = first / np.sqrt(inner(first, first))[:, None]
        count[:] = 1
    for j in range(k):
        v = vectors[:, :, j].copy()
        n0 = np.sqrt(inner(v, v))
        for i in range(need):
            active = (count > i)[:, None]
            v = v - active * inner(out[:, :, i], v)[:, None] * out[:, :, i]
        nv = np.sqrt(inner(v, v))
        take = (nv > tol * n0) & (count < need)
        sel = np.nonzero(take)[0]
        out[sel, :, count[sel]] = v[sel] / nv[sel, None]
        count[sel] += 1
    if np.any(count < need):
        bad = int(np.argmin(count))
        raise np.linalg.LinAlgError(f"Gram–Schmidt breakdown at base point {bad}")
    return out


def initial_frame(model, chart: Chart, seed: int = 0) -> np.ndarray:
    """``g₀``-orthonormal tangential frame at ``r_min`` from the coordinate axes in seed order."""
    x = chart.base_points
    P = x.shape[0]
    D = chart.dim
    pts = np.concatenate([np.full((P, 1), chart.r_min), x], axis=1)
    G = model.metric(pts)
    order = axis_order(chart.dim_boundary, seed)
    axes = np.zeros((P, D, D - 1))
    for j, ax in enumerate(order):
        axes[:, 1 + ax, j] = 1.0
    return _gram_schmidt(axes, G)


@dataclass(frozen=True, eq=False)
class BetaSeries:
    r: np.ndarray
    values: np.ndarray  # (K, P, m): β_r(e_j)
    fit: ExtrapolationResult
    frame0: np.ndarray  # (P, D, m)
    trajectory: RadialTrajectory
    sum_sq_defect: float

    @property
    def limit(self) -> np.ndarray:
        return self.fit.limit

    def decay(self) -> Series:
        dev = np.max(np.linalg.norm(self.values - self.limit[None], axis=-1), axis=1)
        return Series("beta", self.r, dev)


def beta_series(model, chart: Chart, frame0: np.ndarray, samples: LineSamples | None = None,
                window=None) -> BetaSeries:
    """Transport ``frame0`` and evaluate ``β_r(e) = g(J∂r, E)`` on the output slices."""
    if samples is None:
        samples = sample_lines(model, chart)
    traj = transport_trajectory(model, chart.base_points, frame0, chart.r_min, chart.r_max, chart.h_r,
                                chart=chart)
    E = traj.at(samples.r)
    vals = np.einsum("kpa,kpab,kpbj->kpj", samples.J_dr, samples.g, E, optimize=True)
    defect = float(np.max(np.abs(np.sum(vals**2, axis=-1) - 1.0)))
    fit = extrapolate_limit(samples.r, vals, window=window)
    return BetaSeries(samples.r, vals, fit, frame0, traj, defect)


def extract_e0(beta: BetaSeries, tol: float = 1e-6) -> np.ndarray:
    """Unit coefficients of ``e₀`` in the candidate frame: the normalised ``β`` limit."""
    b = beta.limit
    nb = np.linalg.norm(b, axis=-1)
    if np.any(nb < 1e-12):
        raise ValueError("β vanishes: cannot extract e0")
    worst = float(np.max(np.abs(nb - 1.0)))
    if worst > tol:
        raise ValueError(f"‖β‖ deviates from 1 by {worst:.3e} (extrapolation failure)")
    return b / nb[:, None]


@dataclass(frozen=True, eq=False)
class AdmissibleFrame:
    coeffs: np.ndarray  # (P, m, m): columns = frame vectors in the candidate basis
    base: BetaSeries
    j_admissible: bool = False
    pairing: Series | None = None
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def initial(self) -> np.ndarray:
        return np.einsum("pdm,pmj->pdj", self.base.frame0, self.coeffs)

    @cached_property
    def trajectory(self) -> RadialTrajectory:
        return self.base.trajectory.recombine(self.coeffs)

    def at(self, r_values) -> np.ndarray:
        idx = self.base.trajectory.index_of(r_values)
        return np.einsum("kpdm,pmj->kpdj", self.base.trajectory.frames[idx], self.coeffs, optimize=True)

    @property
    def beta_limits(self) -> np.ndarray:
        """``β(e_j)`` for the frame vectors."""
        return np.einsum("pm,pmj->pj", self.base.limit, self.coeffs)


def admissible_frame(model, beta: BetaSeries, e0: np.ndarray, chart: Chart, seed: int = 0) -> AdmissibleFrame:
    """Complete ``e₀`` to a ``g₀``-orthonormal frame with ``e_j ∈ ker β``.

    Work happens in candidate-frame coefficients (Euclidean, since the candidate
    frame is ``g₀``-orthonormal).  The coordinate axes, in seed order, seed the
    Gram–Schmidt completion; on breakdown the next axis permutation is tried.
    """
    P, D, m = beta.frame0.shape
    x = chart.base_points
    pts = np.concatenate([np.full((P, 1), chart.r_min), x], axis=1)
    G0 = model.metric(pts)
    # coefficients of coordinate axis ∂_k in the candidate frame: <e_j, ∂_k>_{g0}
    ax_coef = np.einsum("pdj,pdk->pjk", beta.frame0, G0[:, :, 1:])
    eye = np.broadcast_to(np.eye(m), (P, m, m))
    nperm = len(list(itertools.permutations(range(m))))
    last = None
    for attempt in range(nperm):
        order = axis_order(m, seed + attempt)
        try:
            C = _gram_schmidt(ax_coef[:, :, list(order)], eye, first=e0, need=m)
            break
        except np.linalg.LinAlgError as exc:
            last = exc
    else:
        raise RuntimeError(f"admissible frame completion failed for every axis order: {last}")
    return AdmissibleFrame(C, beta, False, None, seed, {"axis_order": order})


def j_admissible_frame(model, frame: AdmissibleFrame, samples: LineSamples, tol: float = 1e-6,
                       window=None) -> AdmissibleFrame:
    """Rebuild ``e_2, e_4, ...`` so that ``J E_{2j-1} - E_{2j} → 0``.

    For each pair, ``β^k_r(v) = g(V, J E_k)`` is evaluated for ``v`` in the span of
    the remaining vectors, its limit is extrapolated, and ``e_{k+1}`` is taken as
    its normalised dual; the rest of the span is re-orthonormalised against it.
    """
    C = frame.coeffs.copy()
    P, m, _ = C.shape
    r = samples.r
    idx = frame.base.trajectory.index_of(r)
    Vk = frame.base.trajectory.frames[idx]  # candidate frames on slices (K, P, D, m)
    for k in range(1, m - 1, 2):
        E = np.einsum("kpdm,pmj->kpdj", Vk, C, optimize=True)
        JEk = np.einsum("kpab,kpb->kpa", samples.J, E[..., k])
        rest = E[..., k + 1:]
        vals = np.einsum("kpa,kpab,kpbj->kpj", JEk, samples.g, rest, optimize=True)
        lim = extrapolate_limit(r, vals, window=window).limit  # (P, m-k-1)
        nb = np.linalg.norm(lim, axis=-1)
        if np.any(nb < tol):
            raise ValueError(f"J-pairing extraction failed: β^{k} limit vanishes (index {k})")
        u = lim / nb[:, None]
        sub = m - k - 1
        cand = np.broadcast_to(np.eye(sub), (P, sub, sub)).copy()
        M = _gram_schmidt(cand, np.broadcast_to(np.eye(sub), (P, sub, sub)), first=u, need=sub)
        block = np.broadcast_to(np.eye(m), (P, m, m)).copy()
        block[:, k + 1:, k + 1:] = M
        C = np.einsum("pij,pjk->pik", C, block)
    E = np.einsum("kpdm,pmj->kpdj", Vk, C, optimize=True)
    pair = np.zeros(r.size)
    for k in range(1, m - 1, 2):
        diff = np.einsum("kpab,kpb->kpa", samples.J, E[..., k]) - E[..., k + 1]
        nrm = np.sqrt(np.einsum("kpa,kpab,kpb->kp", diff, samples.g, diff))
        pair = np.maximum(pair, np.max(nrm, axis=1))
    return AdmissibleFrame(C, frame.base, True, Series("j_pairing", r, pair), frame.seed, dict(frame.diagnostics))


def frame_diagnostics(frame: AdmissibleFrame, samples: LineSamples) -> dict:
    """Series of ``max ‖E₀ − J∂r‖_g`` and ``max_j |g(J∂r, E_j) − δ_0j|``, plus orthonormality."""
    E = frame.at(samples.r)
    diff = E[..., 0] - samples.J_dr
    e0 = np.max(np.sqrt(np.einsum("kpa,kpab,kpb->kp", diff, samples.g, diff)), axis=1)
    bet = np.einsum("kpa,kpab,kpbj->kpj", samples.J_dr, samples.g, E, optimize=True)
    bet[..., 0] -= 1.0
    gram = np.einsum("kpaj,kpab,kpbl->kpjl", E, samples.g, E, optimize=True)
    m = E.shape[-1]
    return {
        "e0_minus_jdr": Series("e0_minus_jdr", samples.r, e0),
        "beta_frame": Series("beta_frame", samples.r, np.max(np.abs(bet), axis=(1, 2))),
        "orthonormality": float(np.max(np.abs(gram - np.eye(m)))),
    }
