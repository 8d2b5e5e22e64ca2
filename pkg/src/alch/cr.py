"""CR structure of the boundary data: contact form, Levi form, Reeb field, Nijenhuis criterion.

Derivatives in the base directions use the grid stencils of :mod:`alch.chart`;
every pointwise check is evaluated on the interior of the base grid, where the
five-point stencil applies.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryData, norm_bilinear
from .chart import Chart, stencil_apply
from .rates import Series, classify_regime, fit_decay

__all__ = [
    "exterior_d",
    "contact_coefficient",
    "contact_check",
    "h0_basis",
    "levi_and_reeb",
    "nijenhuis_tensor",
    "nijenhuis_check",
    "expansion_residual",
    "CRReport",
    "cr_report",
    "DEFAULT_TOLERANCES",
]

DEFAULT_TOLERANCES = {
    "contact": 1e-3,
    "levi": 1e-3,
    "reeb": 1e-3,
    "nijenhuis": 1e-3,
    "smoothness_budget": 1e3,
}


def _grad(field_flat: np.ndarray, chart: Chart) -> tuple[np.ndarray, np.ndarray]:
    """``out[..., c] = ∂_c field`` on the flat base grid, plus a low-accuracy point mask."""
    f = field_flat.reshape(chart.grid + field_flat.shape[1:])
    parts, low = [], np.zeros(chart.grid, dtype=bool)
    for ax, h in enumerate(chart.base_spacing):
        d, flag = stencil_apply(f, ax, h, 1)
        parts.append(d)
        shape = [1] * len(chart.grid)
        shape[ax] = flag.size
        low = low | flag.reshape(shape)
    out = np.stack(parts, axis=-1)
    return out.reshape((-1,) + out.shape[len(chart.grid):]), low.reshape(-1)


def exterior_d(omega: np.ndarray, chart: Chart) -> np.ndarray:
    """``(dω)_ij = ∂_i ω_j − ∂_j ω_i`` for a covector field sampled on the base grid (flat, C order)."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (chart.base_points.shape[0], chart.dim_boundary):
        raise ValueError(f"covector field must have shape {(chart.base_points.shape[0], chart.dim_boundary)}")
    if any(g < 2 * chart.margin + 1 for g in chart.grid):
        raise ValueError("margin violation: base grid has no interior for the stencil")
    d, _ = _grad(omega, chart)  # d[p, j, i] = ∂_i ω_j
    return np.swapaxes(d, -1, -2) - d


def contact_coefficient(eta: np.ndarray, d_eta: np.ndarray) -> np.ndarray:
    """Coefficient of ``η ∧ (dη)^n`` on ``dx¹ ∧ … ∧ dx^{2n+1}``.

    With ``dη = ½ A_ij dx^i ∧ dx^j`` this is ``2^{-n} Σ_σ sgn σ · η_{σ0} Π_k A_{σ(2k-1) σ(2k)}``.
    """
    m = eta.shape[-1]
    if m % 2 == 0:
        raise ValueError("contact coefficient needs odd dimension")
    n = (m - 1) // 2
    out = np.zeros(eta.shape[:-1])
    for perm in itertools.permutations(range(m)):
        sgn = np.linalg.det(np.eye(m)[list(perm)])
        term = eta[..., perm[0]].copy()
        for k in range(n):
            term = term * d_eta[..., perm[2 * k + 1], perm[2 * k + 2]]
        out += sgn * term
    return out / 2**n


def _top_scale(eta, G0):
    n = (eta.shape[-1] - 1) // 2
    nrm = np.sqrt(np.einsum("pi,pij,pj->p", eta, np.linalg.inv(G0), eta))
    return nrm ** (n + 1) * np.sqrt(np.linalg.det(G0))


def contact_check(eta0: np.ndarray, d_eta0: np.ndarray, G0: np.ndarray | None = None,
                  mask: np.ndarray | None = None, tol: float = DEFAULT_TOLERANCES["contact"]) -> tuple[np.ndarray, bool]:
    """Normalised contact coefficient per point and the verdict ``min |coefficient| ≥ tol``.

    The coefficient is divided by ``‖η‖_{g₀}^{n+1} · vol_{g₀}``, so a contact form
    scores of order one and an exact form scores zero.
    """
    if G0 is None:
        G0 = np.broadcast_to(np.eye(eta0.shape[-1]), eta0.shape[:-1] + (eta0.shape[-1],) * 2)
    coef = contact_coefficient(eta0, d_eta0)
    scale = _top_scale(eta0, G0)
    norm = np.where(scale > 0, coef / np.where(scale > 0, scale, 1.0), 0.0)
    sel = norm if mask is None else norm[mask]
    return norm, bool(np.min(np.abs(sel)) >= tol)


def h0_basis(eta0: np.ndarray, xi0: np.ndarray, gamma: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """γ-orthonormal basis of ``H₀ = ker η⁰`` per point, shape ``(P, dimb, 2n)`` (columns).

    Coordinate axes in their natural order are projected by ``v ↦ v − η⁰(v) ξ₀``
    and Gram–Schmidt orthonormalised against ``γ``; projections too short to
    extend the basis are skipped.
    """
    P, m = eta0.shape
    if np.any(np.linalg.norm(eta0, axis=-1) < tol):
        raise ValueError("H₀ basis extraction failed: η⁰ vanishes at some base point")
    proj = np.eye(m)[None] - np.einsum("pi,pj->pij", xi0, eta0)  # columns: projected axes
    out = np.zeros((P, m, m - 1))
    count = np.zeros(P, dtype=int)
    for c in range(m):
        v = proj[:, :, c].copy()
        for _ in range(2):
            for k in range(m - 1):
                u = out[:, :, k]
                v -= np.einsum("pi,pij,pj->p", u, gamma, v)[:, None] * u
        nv = np.sqrt(np.abs(np.einsum("pi,pij,pj->p", v, gamma, v)))
        take = (count < m - 1) & (nv > 1e-6)
        idx = np.nonzero(take)[0]
        out[idx, :, count[idx]] = v[idx] / nv[idx, None]
        count[idx] += 1
    if np.any(count < m - 1):
        raise ValueError("H₀ basis extraction failed: γ degenerate on ker η⁰")
    return out


@dataclass(frozen=True)
class LeviReport:
    levi_gap: float
    levi_gap_g0: float
    reeb_gap: float
    levi_eigen_min: float
    contact_det: np.ndarray
    levi_matrix: np.ndarray


def levi_and_reeb(data: BoundaryData, d_eta0: np.ndarray | None = None, mask: np.ndarray | None = None) -> LeviReport:
    """Gaps of ``dη⁰(·, φ·) = γ`` on ``H₀`` and of ``ι_{ξ₀} dη⁰ = 0``, plus the Levi form spectrum.

    ``levi_gap`` is measured in a γ-orthonormal basis of ``H₀``; ``levi_gap_g0``
    is the basis-free ``g₀``-norm of ``dη⁰(·, φ·) − γ`` restricted to ``H₀``.
    """
    chart = data.chart
    if d_eta0 is None:
        d_eta0 = exterior_d(data.eta0, chart)
    if mask is None:
        mask = chart.interior_mask()
    sel = np.nonzero(mask)[0]
    eta0, xi0, gamma, phi, G0 = (a[sel] for a in (data.eta0, data.xi0, data.gamma, data.phi, data.g0))
    dn = d_eta0[sel]
    H = h0_basis(eta0, xi0, gamma)
    phiH = np.einsum("pij,pja->pia", phi, H)
    L = np.einsum("pia,pij,pjb->pab", H, dn, phiH)  # dη⁰(h_a, φ h_b)
    gH = np.einsum("pia,pij,pjb->pab", H, gamma, H)
    levi_gap = float(np.max(np.abs(L - gH)))
    # basis-free: B(u,v) = dη⁰(u, φv) − γ(u,v) with u, v projected to H₀
    proj = np.eye(eta0.shape[-1])[None] - np.einsum("pi,pj->pij", xi0, eta0)
    B = np.einsum("pij,pjk->pik", dn, phi) - gamma
    Bh = np.einsum("pai,pab,pbj->pij", proj, B, proj)
    levi_gap_g0 = float(np.max(norm_bilinear(G0, Bh)))
    reeb = np.einsum("pi,pij,pja->pa", xi0, dn, H)
    reeb_gap = float(np.max(np.abs(reeb)))
    Ls = 0.5 * (L + np.swapaxes(L, -1, -2))
    eig = np.linalg.eigvalsh(Ls)
    cdet = np.linalg.det(np.einsum("pia,pij,pjb->pab", H, dn, H))
    return LeviReport(levi_gap, levi_gap_g0, reeb_gap, float(eig.min()), cdet, L)


def nijenhuis_tensor(phi: np.ndarray, chart: Chart) -> tuple[np.ndarray, np.ndarray]:
    """``N^k_ij = N_φ(∂_i, ∂_j)^k`` with ``N_A(X,Y) = −A²[X,Y] − [AX,AY] + A[AX,Y] + A[X,AY]``.

    Coordinate fields commute, so only the last three brackets survive; they are
    assembled from stencil derivatives of the components ``φ^k_i``.  Returns the
    tensor and ``dphi[p, k, i, m] = ∂_m φ^k_i``.
    """
    dphi, _ = _grad(phi, chart)
    # [φ∂_i, φ∂_j]^k = φ^m_i ∂_m φ^k_j − φ^m_j ∂_m φ^k_i
    br = np.einsum("pmi,pkjm->pkij", phi, dphi)
    br = br - np.swapaxes(br, -1, -2)
    # φ[φ∂_i, ∂_j] = −φ^k_l ∂_j φ^l_i ;  φ[∂_i, φ∂_j] = φ^k_l ∂_i φ^l_j
    t = np.einsum("pkl,plij->pkij", phi, dphi)
    N = -br - t + np.swapaxes(t, -1, -2)
    return N, dphi


@dataclass(frozen=True)
class NijenhuisReport:
    gap: float
    smoothness: float
    noisy: bool


def nijenhuis_check(data: BoundaryData, d_eta0: np.ndarray | None = None, mask: np.ndarray | None = None,
                    smoothness_budget: float = DEFAULT_TOLERANCES["smoothness_budget"]) -> NijenhuisReport:
    """Grid-max component gap of ``N_φ(h_a, h_b) − dη⁰(h_a, h_b) ξ₀`` over the H₀ basis."""
    chart = data.chart
    if d_eta0 is None:
        d_eta0 = exterior_d(data.eta0, chart)
    if mask is None:
        mask = chart.interior_mask()
    N, dphi = nijenhuis_tensor(data.phi, chart)
    sel = np.nonzero(mask)[0]
    H = h0_basis(data.eta0[sel], data.xi0[sel], data.gamma[sel])
    NH = np.einsum("pkij,pia,pjb->pkab", N[sel], H, H)
    dH = np.einsum("pij,pia,pjb->pab", d_eta0[sel], H, H)
    target = np.einsum("pk,pab->pkab", data.xi0[sel], dH)
    gap = float(np.max(np.abs(NH - target)))
    smooth = float(np.max(np.abs(dphi[sel])))
    return NijenhuisReport(gap, smooth, smooth > smoothness_budget)


def expansion_residual(model, data: BoundaryData, r_values=None, mask: np.ndarray | None = None,
                       window: tuple = (6.0, 12.0), a_nominal: float | None = None, one_sided: bool = False,
                       noise_floor: float = 1e-12) -> dict:
    """Per-slice max of ``‖g − ĝ‖_g`` with ``ĝ = dr² + e^{2r} η⁰⊗η⁰ + e^{r} γ``, plus its decay fit."""
    chart = data.chart
    r = chart.r_values if r_values is None else np.asarray(r_values, dtype=float)
    if mask is None:
        mask = chart.interior_mask()
    x = data.base_points[mask]
    pts = np.empty((r.size, x.shape[0], chart.dim))
    pts[..., 0] = r[:, None]
    pts[..., 1:] = x[None]
    G = model.metric(pts)
    eta0, gamma = data.eta0[mask], data.gamma[mask]
    ghat = (np.exp(2 * r)[:, None, None, None] * np.einsum("pi,pj->pij", eta0, eta0)[None]
            + np.exp(r)[:, None, None, None] * gamma[None])
    diff = G[..., 1:, 1:] - ghat
    vals = np.max(norm_bilinear(G[..., 1:, 1:], diff), axis=1)
    series = Series("g_minus_ghat", r, vals)
    out = {"series": series, "fit": None, "verdict": None}
    win = series.window(*window)
    if win.r.size >= 6:
        fit = fit_decay(win, allow_log=True, a_nominal=a_nominal, noise_floor=noise_floor)
        out["fit"] = fit
        if a_nominal is not None:
            out["verdict"] = classify_regime(a_nominal, fit, "g_minus_ghat", one_sided=one_sided)
    return out


@dataclass(frozen=True, eq=False)
class CRReport:
    d_eta0: np.ndarray
    contact_coefficient: np.ndarray
    contact_det: np.ndarray
    levi_gap: float
    levi_gap_g0: float
    reeb_gap: float
    nijenhuis_gap: float
    levi_eigen_min: float
    phi_smoothness: float
    verdict: dict
    tolerances: dict = field(default_factory=dict)
    expansion: dict | None = None

    @property
    def passed(self) -> bool:
        return all(self.verdict.values())

    def to_dict(self) -> dict:
        out = {
            "contact_coefficient_min_abs": float(np.min(np.abs(self.contact_coefficient))),
            "contact_det_min_abs": float(np.min(np.abs(self.contact_det))),
            "levi_gap": self.levi_gap,
            "levi_gap_g0": self.levi_gap_g0,
            "reeb_gap": self.reeb_gap,
            "nijenhuis_gap": self.nijenhuis_gap,
            "levi_eigen_min": self.levi_eigen_min,
            "phi_smoothness": self.phi_smoothness,
            "verdict": {k: ("PASS" if v else "FAIL") for k, v in self.verdict.items()},
            "passed": self.passed,
            "tolerances": dict(self.tolerances),
        }
        if self.expansion is not None:
            s, fit, ver = self.expansion["series"], self.expansion["fit"], self.expansion["verdict"]
            out["expansion"] = {
                "max_residual": s.max(),
                "fit": None if fit is None else fit.to_dict(),
                "regime": None if ver is None else ver.to_dict(),
            }
        return out


def cr_report(data: BoundaryData, model=None, tol: dict | None = None, expansion_kw: dict | None = None) -> CRReport:
    """Run every CR check on ``data``; with ``model`` also the metric expansion residual."""
    tol = {**DEFAULT_TOLERANCES, **(tol or {})}
    chart = data.chart
    mask = chart.interior_mask()
    d_eta0 = exterior_d(data.eta0, chart)
    coef, contact_ok = contact_check(data.eta0, d_eta0, data.g0, mask, tol["contact"])
    lev = levi_and_reeb(data, d_eta0, mask)
    nij = nijenhuis_check(data, d_eta0, mask, tol["smoothness_budget"])
    verdict = {
        "contact": contact_ok,
        "levi": lev.levi_gap <= tol["levi"],
        "reeb": lev.reeb_gap <= tol["reeb"],
        "nijenhuis": nij.gap <= tol["nijenhuis"] and not nij.noisy,
        "pseudoconvex": lev.levi_eigen_min > 0.0,
    }
    expansion = None
    if model is not None:
        kw = {"noise_floor": data.diagnostics.get("decay_noise_floor", 1e-12), **(expansion_kw or {})}
        expansion = expansion_residual(model, data, **kw)
    return CRReport(d_eta0, coef[mask], lev.contact_det, lev.levi_gap, lev.levi_gap_g0, lev.reeb_gap, nij.gap,
                    lev.levi_eigen_min, nij.smoothness, verdict, tol, expansion)
