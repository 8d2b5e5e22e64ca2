"""Rescaled coframes, the Carnot metric, ξ₀, φ, and their limits at infinity.

All base-point fields are flat arrays over ``chart.base_points`` (C order of
the base grid).  Norms of boundary objects use ``g₀``, the tangential metric
at ``r_min``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .chart import Chart
from .extrapolate import ExtrapolationResult, extrapolate_limit
from .frames import (AdmissibleFrame, LineSamples, admissible_frame, beta_series, extract_e0,
                     frame_diagnostics, initial_frame, j_admissible_frame, sample_lines)
from .rates import RATE_MAP, Series, classify_regime, fit_decay

__all__ = [
    "CoframeSeries",
    "coframe_series",
    "PhiSeries",
    "phi_series",
    "BoundaryData",
    "boundary_data",
    "extrapolate_limit",
    "boundary_norms",
    "BoundaryEstimator",
]


# -- g0 norms ------------------------------------------------------------------

def _inv(G):
    return np.linalg.inv(G)


def norm_covector(G, w):
    return np.sqrt(np.abs(np.einsum("...i,...ij,...j->...", w, _inv(G), w)))


def norm_vector(G, v):
    return np.sqrt(np.abs(np.einsum("...i,...ij,...j->...", v, G, v)))


def norm_bilinear(G, B):
    Gi = _inv(G)
    return np.sqrt(np.abs(np.einsum("...ij,...ik,...jl,...kl->...", B, Gi, Gi, B)))


def norm_endo(G, A):
    Gi = _inv(G)
    return np.sqrt(np.abs(np.einsum("...ij,...ik,...jl,...kl->...", A, G, Gi, A)))


boundary_norms = {"covector": norm_covector, "vector": norm_vector, "bilinear": norm_bilinear,
                  "endomorphism": norm_endo}


# -- coframes -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoframeSeries:
    r: np.ndarray
    eta: np.ndarray  # (K, P, m, dimb): eta[k, p, j, i] = η^j_r(∂_i)
    reconstruction_error: float
    u: np.ndarray  # (K, P, m, m)
    ode_residual: Series

    @property
    def eta0(self) -> np.ndarray:
        return self.eta[:, :, 0, :]


def _scales(r, m):
    s = np.empty((r.size, m))
    s[:, 0] = np.exp(-r)
    s[:, 1:] = np.exp(-r / 2)[:, None]
    return s


def _eta_from_frames(E, G, r):
    low = np.einsum("...ia,...aj->...ji", G[..., 1:, :], E, optimize=True)
    return low * _scales(r, E.shape[-1])[(slice(None),) + (None,) * (low.ndim - 3) + (slice(None), None)]


def coframe_series(model, frame: AdmissibleFrame, samples: LineSamples, interior: np.ndarray | None = None) -> CoframeSeries:
    """Evaluate ``η^j_r`` directly from the transported frame, plus the η ODE residual."""
    r = samples.r
    E = frame.at(r)
    K, P, D, m = E.shape
    eta = _eta_from_frames(E, samples.g, r)
    gr = samples.g[..., 1:, 1:]
    sc = np.exp(np.stack([2 * r] + [r] * (m - 1), axis=1))
    recon = np.einsum("kj,kpji,kpjl->kpil", sc, eta, eta, optimize=True)
    rec_err = float(np.max(np.abs(recon - gr) / np.max(np.abs(gr), axis=(-1, -2), keepdims=True)))

    # u^j_k from curvature: R(∂r, E_j, ∂r, E_k)
    Rr = samples.riemann.components[..., 0, :, 0, :]
    RE = np.einsum("kpab,kpaj,kpbl->kpjl", Rr, E, E, optimize=True)
    u = -RE.copy()
    u[..., 0, 0] = -(RE[..., 0, 0] + 1.0)
    u[..., 0, 1:] *= np.exp(-r / 2)[:, None, None]
    u[..., 1:, 0] *= np.exp(r / 2)[:, None, None]
    diag = np.arange(1, m)
    u[..., diag, diag] = -(RE[..., diag, diag] + 0.25)

    ode = _eta_ode_residual(model, frame, samples, u, interior)
    return CoframeSeries(r, eta, rec_err, u, ode)


def _eta_ode_residual(model, frame, samples, u, interior):
    """``∂²η + c ∂η − u η`` with five-point r-derivatives on the transport grid."""
    from .chart import FD_COEFFS

    traj = frame.base.trajectory
    h = traj.h_r
    r = samples.r
    idx = traj.index_of(r)
    ok = (idx >= 2) & (idx <= traj.r.size - 3)
    ks = np.nonzero(ok)[0]
    x = samples.x
    P = x.shape[0]
    sel = np.arange(P) if interior is None else np.nonzero(interior)[0]
    x = x[sel]
    etas = []
    for s in range(-2, 3):
        rr = traj.r[idx[ks] + s]
        pts = np.concatenate([np.repeat(rr, x.shape[0])[:, None], np.tile(x, (rr.size, 1))], axis=1)
        G = model.metric(pts).reshape(rr.size, x.shape[0], samples.g.shape[-2], samples.g.shape[-1])
        Ef = np.einsum("kpdm,pmj->kpdj", traj.frames[idx[ks] + s][:, sel], frame.coeffs[sel], optimize=True)
        etas.append(_eta_from_frames(Ef, G, rr))
    c1, c2 = FD_COEFFS[1], FD_COEFFS[2]
    d1 = sum(c1[i] * etas[i] for i in range(5)) / h
    d2 = sum(c2[i] * etas[i] for i in range(5)) / h**2
    eta = etas[2]
    m = eta.shape[2]
    c = np.ones(m)
    c[0] = 2.0
    res = d2 + c[None, None, :, None] * d1 - np.einsum("kpjl,kpli->kpji", u[ks][:, sel], eta)
    G0 = samples.g[0][sel][:, 1:, 1:]
    nrm = norm_covector(G0[None, :, None], res)
    vals = np.full(r.size, np.nan)
    vals[ks] = np.max(nrm.reshape(ks.size, -1), axis=1)
    return Series("eta_ode", r[ks], vals[ks])


# -- phi ----------------------------------------------------------------------------

def _Phi(G, J):
    """``Φ = J + g(·, J∂r) ⊗ ∂r − g(·, ∂r) ⊗ J∂r`` as an endomorphism field."""
    Jdr = J[..., :, 0]
    low = np.einsum("...bc,...c->...b", G, Jdr)
    Phi = J.copy()
    Phi[..., 0, :] += low
    Phi -= np.einsum("...a,...b->...ab", Jdr, G[..., 0, :])
    return Phi


@dataclass(frozen=True, eq=False)
class PhiSeries:
    r: np.ndarray
    phi: np.ndarray  # (K, P, dimb, dimb)
    fit: ExtrapolationResult
    evolution: Series
    phi_jdr: float

    @property
    def limit(self) -> np.ndarray:
        return self.fit.limit


def phi_series(model, samples: LineSamples, interior: np.ndarray | None = None, window=None) -> PhiSeries:
    """``φ_r`` (tangential block of Φ), its limit, and the evolution-identity residual.

    The identity is ``∂r φ_r = φ_r S_r − S_r φ_r + ψ_r`` with ``ψ_r`` the
    tangential block of ``π (∇_∂r J) π`` and ``π`` the orthogonal projection
    onto ``{∂r}^⊥`` (which commutes with ``S`` and is Lie-parallel along ``∂r``).  ``∂r φ_r`` is a five-point difference with step ``h_r``.
    """
    from .chart import FD_COEFFS

    chart = samples.chart
    r = samples.r
    G, J = samples.g, samples.J
    Phi = _Phi(G, J)
    Jdr = samples.J_dr
    phi_jdr = float(np.max(np.abs(np.einsum("...ab,...b->...a", Phi, Jdr))
                           / np.maximum(1.0, np.max(np.abs(Phi), axis=(-1, -2)))[..., None]))
    phi = Phi[..., 1:, 1:]
    fit = extrapolate_limit(r, phi, window=window)

    x = samples.x
    sel = np.arange(x.shape[0]) if interior is None else np.nonzero(interior)[0]
    h = chart.h_r
    dphi = 0.0
    c1 = FD_COEFFS[1]
    for s, w in zip(range(-2, 3), c1):
        if w == 0.0:
            continue
        rr = r + s * h
        pts = np.empty((r.size, sel.size, chart.dim))
        pts[..., 0] = rr[:, None]
        pts[..., 1:] = x[sel][None]
        Gs, Js = model.metric(pts), model.J(pts)
        dphi = dphi + w * _Phi(Gs, Js)[..., 1:, 1:]
    dphi = dphi / h
    D = G.shape[-1]
    Gsel = G[:, sel]
    pi = np.broadcast_to(np.eye(D), Gsel.shape).copy()
    pi[..., 0, :] -= Gsel[..., 0, :]
    psi = np.einsum("...ab,...bc,...cd->...ad", pi, samples.nabla_r_J[:, sel], pi)[..., 1:, 1:]
    S = samples.christoffel.components[:, sel][..., 1:, 1:, 0]
    ph = phi[:, sel]
    res = dphi - (ph @ S - S @ ph + psi)
    nrm = norm_endo(Gsel[..., 1:, 1:], res)
    evo = Series("phi_evolution", r, np.max(nrm, axis=1))
    return PhiSeries(r, phi, fit, evo, phi_jdr)


# -- boundary data ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryData:
    chart: Chart
    model: dict
    seed: int
    base_points: np.ndarray
    g0: np.ndarray
    eta0: np.ndarray
    gamma: np.ndarray
    xi0: np.ndarray
    xi0_kernel: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    phi: np.ndarray
    residuals: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    regimes: dict = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    flags: tuple = ()
    faults: dict = field(default_factory=dict)

    @property
    def grid_shape(self) -> tuple:
        return self.chart.grid

    @property
    def interior(self) -> np.ndarray:
        return self.chart.interior_mask()

    def on_grid(self, arr: np.ndarray) -> np.ndarray:
        return arr.reshape(self.chart.grid + arr.shape[1:])

    def with_fault(self, gamma_scale: float = 1.0, phi_sign: float = 1.0) -> "BoundaryData":
        """Copy with a deliberately miscalibrated ``γ`` or reversed ``φ`` (diagnostic fault injection)."""
        return dataclasses.replace(self, gamma=self.gamma * gamma_scale, phi=self.phi * phi_sign,
                                   faults={"gamma_scale": gamma_scale, "phi_sign": phi_sign})

    def summary(self) -> dict:
        """Component tables at the base-grid corners plus field norms."""
        shape = self.chart.grid
        corners = [tuple(c) for c in np.array(np.meshgrid(*[[0, s - 1] for s in shape], indexing="ij")).reshape(len(shape), -1).T]
        flat = [int(np.ravel_multi_index(c, shape)) for c in corners]
        G0 = self.g0
        tables = []
        for c, i in zip(corners, flat):
            tables.append({"index": list(c), "x": self.base_points[i].tolist(), "eta0": self.eta0[i].tolist(),
                           "gamma": self.gamma[i].tolist(), "xi0": self.xi0[i].tolist(), "phi": self.phi[i].tolist()})
        return {
            "corners": tables,
            "norms": {
                "eta0": float(np.max(norm_covector(G0, self.eta0))),
                "gamma": float(np.max(norm_bilinear(G0, self.gamma))),
                "xi0": float(np.max(norm_vector(G0, self.xi0))),
                "phi": float(np.max(norm_endo(G0, self.phi))),
            },
            "residuals": _jsonable(self.residuals),
            "invariants": _jsonable(self.invariants),
            "diagnostics": _jsonable(self.diagnostics),
            "fits": {k: v.to_dict() for k, v in self.fits.items()},
            "regimes": {k: v.to_dict() for k, v in self.regimes.items()},
            "flags": list(self.flags),
        }

    def to_json(self) -> dict:
        return {
            "chart": self.chart.to_dict(),
            "model": self.model,
            "seed": self.seed,
            "grid_axes": [ax.tolist() for ax in self.chart.base_axes],
            "base_points": self.base_points.tolist(),
            "eta0": self.eta0.tolist(),
            "gamma": self.gamma.tolist(),
            "xi0": self.xi0.tolist(),
            "phi": self.phi.tolist(),
            "g0": self.g0.tolist(),
            "faults": self.faults,
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _interior_max(values, mask):
    return np.max(values[:, mask].reshape(values.shape[0], -1), axis=1)


def boundary_data(model, chart: Chart, seed: int = 0, rate_window: tuple = (6.0, 12.0),
                  limit_window=None, tol: dict | None = None, samples: LineSamples | None = None,
                  with_frames: bool = False):
    """Run the radial pipeline and assemble :class:`BoundaryData`.

    Steps: candidate frame at ``r_min`` → transport and ``β_r`` → ``e₀`` →
    admissible and J-admissible frames → coframes, ``γ_r``, ``ξ₀^r``, ``φ_r`` →
    limits, invariants and decay fits.  With ``with_frames`` the frame and
    sample objects are returned as well.
    """
    tol = {"beta_norm": 1e-6, "xi0_routes": 1e-5, "gamma_psd": 1e-6, **(tol or {})}
    spec = model.spec
    if chart.dim_boundary != spec.dim_boundary:
        raise ValueError(f"chart.dim_boundary = {chart.dim_boundary} but model needs {spec.dim_boundary}")
    if samples is None:
        samples = sample_lines(model, chart)
    mask = chart.interior_mask()
    r = samples.r
    flags = []

    frame0 = initial_frame(model, chart, seed)
    beta = beta_series(model, chart, frame0, samples, window=limit_window)
    e0 = extract_e0(beta, tol["beta_norm"])
    adm = admissible_frame(model, beta, e0, chart, seed)
    jadm = j_admissible_frame(model, adm, samples, window=limit_window)
    cof = coframe_series(model, jadm, samples, mask)

    G0 = samples.g[0][:, 1:, 1:]
    gr = samples.g[..., 1:, 1:]
    eta0_r = cof.eta0
    e2r = np.exp(2 * r)[:, None, None, None]
    # e^{-r}(g_r - e^{2r} η⁰⊗η⁰) cancels catastrophically at large r; the frame sum is the same tensor
    gamma_def = np.exp(-r)[:, None, None, None] * (gr - e2r * np.einsum("kpi,kpj->kpij", eta0_r, eta0_r))
    gamma_r = np.einsum("kpji,kpjl->kpil", cof.eta[:, :, 1:], cof.eta[:, :, 1:])
    E = jadm.at(r)
    xi_r = E[:, :, 1:, :] * np.exp(np.stack([r] + [r / 2] * (E.shape[-1] - 1), axis=1))[:, None, None, :]
    phs = phi_series(model, samples, mask, window=limit_window)
    S_r = samples.christoffel.components[..., 1:, 1:, 0]

    fit_eta = extrapolate_limit(r, cof.eta, window=limit_window)
    fit_gamma = extrapolate_limit(r, gamma_r, window=limit_window)
    fit_xi = extrapolate_limit(r, xi_r, window=limit_window)
    eta_lim = fit_eta.limit
    eta0 = eta_lim[:, 0, :]
    gamma = 0.5 * (fit_gamma.limit + np.swapaxes(fit_gamma.limit, -1, -2))
    xi0 = fit_xi.limit[:, :, 0]
    xi = np.moveaxis(fit_xi.limit[:, :, 1:], -1, 1)
    phi = phs.limit

    # second route to ξ₀: kernel of γ relative to g₀, normalised by η⁰(ξ₀) = 1
    L = np.linalg.cholesky(G0)
    Li = np.linalg.inv(L)
    Gt = Li @ gamma @ np.swapaxes(Li, -1, -2)
    lam, vec = np.linalg.eigh(Gt)
    kern = np.einsum("pji,pj->pi", Li, vec[:, :, 0])
    xi0_kernel = kern / np.einsum("pi,pi->p", eta0, kern)[:, None]
    route_gap = float(np.max(np.abs(xi0_kernel - xi0)))
    if route_gap > tol["xi0_routes"]:
        flags.append("xi0_routes_disagree")
    if lam[:, 0].min() < -tol["gamma_psd"] * max(1.0, float(lam.max())):
        raise ValueError(f"Carnot metric not positive semi-definite: eigenvalue {lam[:, 0].min():.3e}")
    for name, fit in (("eta", fit_eta), ("gamma", fit_gamma), ("xi", fit_xi), ("phi", phs.fit), ("beta", beta.fit)):
        bad = (fit.flags >= 2) & (fit.residual > 1e-8 * (1.0 + np.abs(fit.limit)))
        if np.any(bad):
            flags.append(f"{name}_extrapolation_degenerate")

    # decay series over the evaluation box
    half = 0.5 * (np.eye(G0.shape[-1]) + np.einsum("pi,pj->pij", xi0, eta0))
    series = {
        "eta0": Series("eta0", r, _interior_max(norm_covector(G0[None], eta0_r - eta0[None]), mask)),
        "gamma": Series("gamma", r, _interior_max(norm_bilinear(G0[None], gamma_r - gamma[None]), mask)),
        "xi0": Series("xi0", r, _interior_max(norm_vector(G0[None], xi_r[..., 0] - xi0[None]), mask)),
        "phi": Series("phi", r, _interior_max(norm_endo(G0[None], phs.phi - phi[None]), mask)),
        "S": Series("S", r, _interior_max(norm_endo(G0[None], S_r - half[None]), mask)),
        "beta": Series("beta", r, _interior_max(np.linalg.norm(beta.values - beta.limit[None], axis=-1), mask)),
        "phi_evolution": phs.evolution,
        "eta_ode": cof.ode_residual,
    }
    fd = frame_diagnostics(jadm, samples)
    series["e0_minus_jdr"] = fd["e0_minus_jdr"]
    series["j_pairing"] = jadm.pairing

    fits, regimes = {}, {}
    a_nom = None if spec.exact else spec.a
    # transport drift grows linearly in r; anything below it is numerically zero
    floor = max(1e-12, 5.0 * beta.trajectory.drift_per_unit_r * (chart.r_max - chart.r_min))
    for name in ("eta0", "gamma", "xi0", "phi", "S", "beta", "e0_minus_jdr", "j_pairing"):
        s = series[name].window(*rate_window)
        if s.r.size < 6:
            continue
        fits[name] = fit_decay(s, allow_log=True, a_nominal=a_nom, noise_floor=floor)
        if a_nom is not None and name in RATE_MAP:
            regimes[name] = classify_regime(a_nom, fits[name], name)

    # invariants of the limit objects
    Id = np.eye(G0.shape[-1])
    phi2 = phi @ phi
    inv = {
        "eta0_xi0_minus_1": float(np.max(np.abs(np.einsum("pi,pi->p", eta0, xi0) - 1.0))),
        "gamma_xi0_xi0": float(np.max(np.abs(np.einsum("pij,pi,pj->p", gamma, xi0, xi0)))),
        "phi_xi0": float(np.max(norm_vector(G0, np.einsum("pij,pj->pi", phi, xi0)))),
        "eta0_phi": float(np.max(norm_covector(G0, np.einsum("pi,pij->pj", eta0, phi)))),
        "phi_sq_plus_id": float(np.max(norm_endo(G0, phi2 + Id - np.einsum("pi,pj->pij", xi0, eta0)))),
        "phi_cubed_plus_phi": float(np.max(norm_endo(G0, phi2 @ phi + phi))),
        "gamma_phi_invariance": float(np.max(norm_bilinear(
            G0, np.einsum("pab,pai,pbj->pij", gamma, phi, phi) - gamma))),
        "gamma_min_eig": float(lam[:, 0].min()),
        "gamma_second_eig_min": float(lam[:, 1].min()),
        "xi0_route_gap": route_gap,
        "reconstruction": cof.reconstruction_error,
        "gamma_definition_vs_sum": float(np.max(np.abs(gamma_def - gamma_r) / np.exp(r)[:, None, None, None])),
        "beta_unit_defect": beta.sum_sq_defect,
        "phi_jdr": phs.phi_jdr,
        "frame_orthonormality": fd["orthonormality"],
        "transport_drift_per_unit_r": beta.trajectory.drift_per_unit_r,
        "phi_evolution_max": float(np.nanmax(phs.evolution.values)),
        "eta_ode_max": float(np.nanmax(cof.ode_residual.values)) if cof.ode_residual.values.size else 0.0,
    }

    # pinching constant from 100 g0-unit random directions
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((100, G0.shape[-1]))
    Linv_t = np.swapaxes(Li, -1, -2)
    vv = np.einsum("pij,dj->pdi", Linv_t, dirs / np.linalg.norm(dirs, axis=1, keepdims=True))
    q = (np.einsum("kpi,pdi->kpd", eta0_r, vv) ** 2 + np.einsum("kpij,pdi,pdj->kpd", gamma_r, vv, vv))
    lam_pinch = float(max(np.max(q), 1.0 / np.min(q)))
    gq = np.einsum("kpij,pdi,pdj->kpd", gr, vv, vv)
    er = np.exp(r)[:, None, None]
    pinch_ok = bool(np.all(gq >= er / lam_pinch * (1 - 1e-12)) and np.all(gq <= lam_pinch * er**2 * (1 + 1e-12)))

    sv = np.linalg.svd(eta_lim, compute_uv=False)
    spacing = chart.base_spacing

    def c1_budget(arr):
        f = arr.reshape(chart.grid + arr.shape[1:])
        return float(max(np.max(np.abs(np.diff(f, axis=ax))) / spacing[ax] for ax in range(len(chart.grid))))

    diag = {
        "pinching_lambda": lam_pinch,
        "pinching_holds": pinch_ok,
        "coframe_min_singular_value": float(sv.min()),
        "first_difference_eta0": c1_budget(eta0),
        "first_difference_gamma": c1_budget(gamma),
        "first_difference_phi": c1_budget(phi),
        "j_admissible": jadm.j_admissible,
        "axis_order": list(adm.diagnostics.get("axis_order", ())),
        "limit_window": list(fit_eta.window),
        "decay_noise_floor": floor,
    }
    residuals = {
        "eta": float(np.max(fit_eta.residual)), "gamma": float(np.max(fit_gamma.residual)),
        "xi": float(np.max(fit_xi.residual)), "phi": float(np.max(phs.fit.residual)),
        "beta": float(np.max(beta.fit.residual)),
        "eta_bias": float(np.max(fit_eta.bias)), "gamma_bias": float(np.max(fit_gamma.bias)),
        "xi_bias": float(np.max(fit_xi.bias)), "phi_bias": float(np.max(phs.fit.bias)),
    }
    data = BoundaryData(chart, spec.to_dict(), int(seed), chart.base_points, G0, eta0, gamma, xi0, xi0_kernel,
                        xi, eta_lim, phi, residuals, series, fits, regimes, inv, diag, tuple(flags))
    if with_frames:
        return data, {"samples": samples, "beta": beta, "admissible": adm, "j_admissible": jadm,
                      "coframes": cof, "phi": phs}
    return data


class BoundaryEstimator(BaseEstimator):
    """Estimator-style front end to :func:`boundary_data`.

    ``fit`` accepts a :class:`~alch.models.ModelSpec` or a built model and stores
    the result in ``data_`` along with ``eta0_``, ``gamma_``, ``xi0_``, ``phi_``.
    """

    def __init__(self, chart: Chart | None = None, seed: int = 0, rate_window: tuple = (6.0, 12.0),
                 limit_window=None):
        self.chart = chart
        self.seed = seed
        self.rate_window = rate_window
        self.limit_window = limit_window

    def fit(self, model, y=None):
        from .models import GeometricModel, ModelSpec

        chart = self.chart if self.chart is not None else Chart()
        if isinstance(model, ModelSpec):
            model = GeometricModel(model, chart.h_x)
        self.data_ = boundary_data(model, chart, seed=self.seed, rate_window=self.rate_window,
                                   limit_window=self.limit_window)
        d = self.data_
        self.eta0_, self.gamma_, self.xi0_, self.phi_ = d.eta0, d.gamma, d.xi0, d.phi
        self.fits_ = d.fits
        return self

    def transform(self, X=None):
        """Boundary fields per base point, flattened as ``[η⁰ | γ | ξ₀ | φ]``."""
        check_is_fitted(self, "data_")
        P = self.eta0_.shape[0]
        return np.concatenate([self.eta0_, self.gamma_.reshape(P, -1), self.xi0_, self.phi_.reshape(P, -1)], axis=1)
