"""Levi-Civita connection, curvature in the Besse sign convention, R0, ∇J, ∇²J, ∇R.

Sign convention: ``R(X, Y) = -(∇²_{X,Y} - ∇²_{Y,X})`` so that the unit sphere
has ``R(u, v, u, v) = +1``.  Four-covariant components are stored as
``R[i, j, k, m] = R(∂_i, ∂_j, ∂_k, ∂_m)``.  Christoffel symbols are stored as
``Γ[k, i, j] = Γ^k_{ij}``; their jets append derivative axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import Chart, Metric, TensorField, g_norm, partial_fd
from .rates import Series

__all__ = [
    "christoffel",
    "riemann",
    "r0_tensor",
    "covariant_deriv_J",
    "covariant_deriv_R",
    "sectional",
    "CurvatureBundle",
    "curvature_bundle",
    "deficits",
    "sectional_sanity",
]

_EIN = dict(optimize=True)


def _grid_jet(T: TensorField, order: int):
    """Jets of ``T`` up to ``order``, from stored ``derivs`` or grid differences."""
    if len(T.derivs) >= order:
        return list(T.derivs[:order])
    if T.spacing is None:
        raise ValueError("field has no jets and no grid spacing to difference on")
    ngrid = len(T.grid_shape)
    if ngrid != T.index_dim:
        raise ValueError("grid differencing needs one grid axis per coordinate")
    out = []
    cur = T
    for _ in range(order):
        parts = [partial_fd(cur, ax).components for ax in range(ngrid)]
        arr = np.stack(parts, axis=-1)
        out.append(arr)
        cur = TensorField(arr, cur.slots + "d", spacing=T.spacing)
    return out


def christoffel(g: Metric) -> TensorField:
    """``Γ^k_{ij}`` with as many jets as the metric jets allow (one fewer)."""
    njets = len(g.derivs)
    dg = _grid_jet(g, max(njets, 1))
    Gi = g.inverse
    # A[l, i, j] = d_i g_lj + d_j g_li - d_l g_ij   (dg[a, b, c] = d_c g_ab)
    A = np.einsum("...lji->...lij", dg[0]) + dg[0] - np.einsum("...ijl->...lij", dg[0])
    gam = 0.5 * np.einsum("...kl,...lij->...kij", Gi, A, **_EIN)
    derivs = []
    if len(dg) >= 2:
        d2g = dg[1]
        dGi = -np.einsum("...kp,...pqm,...ql->...klm", Gi, dg[0], Gi, **_EIN)
        dA = (np.einsum("...ljim->...lijm", d2g) + d2g - np.einsum("...ijlm->...lijm", d2g))
        dgam = 0.5 * (np.einsum("...klm,...lij->...kijm", dGi, A, **_EIN)
                      + np.einsum("...kl,...lijm->...kijm", Gi, dA, **_EIN))
        derivs.append(dgam)
        if len(dg) >= 3:
            d3g = dg[2]
            d2Gi = (np.einsum("...kp,...pqm,...qs,...stn,...tl->...klmn", Gi, dg[0], Gi, dg[0], Gi, **_EIN)
                    + np.einsum("...kp,...pqn,...qs,...stm,...tl->...klmn", Gi, dg[0], Gi, dg[0], Gi, **_EIN)
                    - np.einsum("...kp,...pqmn,...ql->...klmn", Gi, d2g, Gi, **_EIN))
            d2A = (np.einsum("...ljimn->...lijmn", d3g) + d3g - np.einsum("...ijlmn->...lijmn", d3g))
            d2gam = 0.5 * (np.einsum("...klmn,...lij->...kijmn", d2Gi, A, **_EIN)
                           + np.einsum("...klm,...lijn->...kijmn", dGi, dA, **_EIN)
                           + np.einsum("...kln,...lijm->...kijmn", dGi, dA, **_EIN)
                           + np.einsum("...kl,...lijmn->...kijmn", Gi, d2A, **_EIN))
            derivs.append(d2gam)
    return TensorField(gam, "udd", spacing=g.spacing, chart=g.chart, derivs=tuple(derivs))


def _riemann_std(gam, dgam):
    """``R^l_{kij}`` of the convention ``R(∂i,∂j)∂k = ∇_i∇_j∂k - ∇_j∇_i∂k``, indices ``[l, k, i, j]``."""
    return (np.einsum("...ljki->...lkij", dgam) - np.einsum("...likj->...lkij", dgam)
            + np.einsum("...lim,...mjk->...lkij", gam, gam, **_EIN)
            - np.einsum("...ljm,...mik->...lkij", gam, gam, **_EIN))


def riemann(g: Metric, gam: TensorField, sym_tol: float = 1e-8) -> TensorField:
    """Four-covariant curvature ``R(∂i, ∂j, ∂k, ∂m)`` in the Besse convention.

    With second metric jets available the fully covariant second-derivative
    formula is used, which keeps the algebraic symmetries exact even when the
    jets come from finite differences.  Otherwise ``Γ`` and its jets are used.
    """
    G = g.components
    G1 = gam.components
    if len(g.derivs) >= 2:
        d2g = g.derivs[1]  # [a, b, c, d] = d_d d_c g_ab
        low = 0.5 * (np.einsum("...adbc->...abcd", d2g) + np.einsum("...bcad->...abcd", d2g)
                     - np.einsum("...bdac->...abcd", d2g) - np.einsum("...acbd->...abcd", d2g))
        low += (np.einsum("...pq,...pbc,...qad->...abcd", G, G1, G1, **_EIN)
                - np.einsum("...pq,...pbd,...qac->...abcd", G, G1, G1, **_EIN))
    else:
        dgam = gam.derivs[0] if gam.derivs else _grid_jet(gam, 1)[0]
        low = np.einsum("...ml,...lkij->...mkij", G, _riemann_std(G1, dgam), **_EIN)
    # low[m, k, i, j] = g(R_std(∂i, ∂j)∂k, ∂m); Besse R(i, j, k, m) = -low[m, k, i, j]
    R = -np.einsum("...mkij->...ijkm", low)
    return TensorField(R, "dddd", symmetry="riemann", spacing=g.spacing, chart=g.chart, sym_tol=sym_tol)


def hat_J(g: Metric, J: TensorField) -> np.ndarray:
    """``Ĵ[a, b] = g(J∂a, ∂b)``."""
    return np.einsum("...bk,...ka->...ab", g.components, J.components, **_EIN)


def r0_tensor(g: Metric, J: TensorField, tol: float = 1e-10) -> TensorField:
    """The constant holomorphic-curvature −1 model tensor built from ``(g, J)``."""
    from .models import check_compatible

    if J.slots != "ud":
        raise ValueError("J must be a (1,1) field with slots 'ud'")
    check_compatible(g.components, J.components, tol)
    G = g.components
    Jh = hat_J(g, J)
    R0 = 0.25 * (np.einsum("...bc,...ad->...abcd", G, G) - np.einsum("...ac,...bd->...abcd", G, G)
                 + np.einsum("...bc,...ad->...abcd", Jh, Jh) - np.einsum("...ac,...bd->...abcd", Jh, Jh)
                 + 2.0 * np.einsum("...ba,...cd->...abcd", Jh, Jh))
    return TensorField(R0, "dddd", symmetry="riemann", spacing=g.spacing, chart=g.chart, sym_tol=1e-8)


def covariant_deriv_J(g: Metric, gam: TensorField, J: TensorField, order: int = 1) -> TensorField:
    """``∇J`` (slots ``dud``, ``[c, a, b] = (∇_c J)^a_b``) or ``∇²J`` (slots ``ddud``)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    jets = _grid_jet(J, order)
    Jc = J.components
    G1 = gam.components
    dJ = jets[0]  # [a, b, c] = d_c J^a_b
    nJ = (np.einsum("...abc->...cab", dJ) + np.einsum("...acm,...mb->...cab", G1, Jc, **_EIN)
          - np.einsum("...mcb,...am->...cab", G1, Jc, **_EIN))
    if order == 1:
        return TensorField(nJ, "dud", spacing=g.spacing, chart=g.chart)
    if len(gam.derivs) < 1:
        raise ValueError("second covariant derivative needs connection jets")
    dG1 = gam.derivs[0]
    d2J = jets[1]
    # d_d of nJ[c, a, b]
    dnJ = (np.einsum("...abcd->...cabd", d2J)
           + np.einsum("...acmd,...mb->...cabd", dG1, Jc, **_EIN)
           + np.einsum("...acm,...mbd->...cabd", G1, dJ, **_EIN)
           - np.einsum("...mcbd,...am->...cabd", dG1, Jc, **_EIN)
           - np.einsum("...mcb,...amd->...cabd", G1, dJ, **_EIN))
    n2 = (np.einsum("...cabd->...dcab", dnJ)
          - np.einsum("...mdc,...mab->...dcab", G1, nJ, **_EIN)
          + np.einsum("...adm,...cmb->...dcab", G1, nJ, **_EIN)
          - np.einsum("...mdb,...cam->...dcab", G1, nJ, **_EIN))
    return TensorField(n2, "ddud", spacing=g.spacing, chart=g.chart)


def covariant_deriv_R(g: Metric, gam: TensorField) -> TensorField:
    """``∇R`` with slots ``ddddd``: ``[e, a, b, c, d] = (∇_e R)(∂a, ∂b, ∂c, ∂d)``; needs third metric jets."""
    if len(gam.derivs) < 2 or len(g.derivs) < 1:
        raise ValueError("∇R needs third-order metric jets")
    G1, dG1, d2G1 = gam.components, gam.derivs[0], gam.derivs[1]
    Rs = _riemann_std(G1, dG1)
    dRs = (np.einsum("...ljkie->...lkije", d2G1) - np.einsum("...likje->...lkije", d2G1)
           + np.einsum("...lime,...mjk->...lkije", dG1, G1, **_EIN)
           + np.einsum("...lim,...mjke->...lkije", G1, dG1, **_EIN)
           - np.einsum("...ljme,...mik->...lkije", dG1, G1, **_EIN)
           - np.einsum("...ljm,...mike->...lkije", G1, dG1, **_EIN))
    dg = g.derivs[0]
    R = -np.einsum("...ml,...lkij->...ijkm", g.components, Rs, **_EIN)
    dR = -(np.einsum("...mle,...lkij->...ijkme", dg, Rs, **_EIN)
           + np.einsum("...ml,...lkije->...ijkme", g.components, dRs, **_EIN))
    nR = (np.einsum("...abcde->...eabcd", dR)
          - np.einsum("...pea,...pbcd->...eabcd", G1, R, **_EIN)
          - np.einsum("...peb,...apcd->...eabcd", G1, R, **_EIN)
          - np.einsum("...pec,...abpd->...eabcd", G1, R, **_EIN)
          - np.einsum("...ped,...abcp->...eabcd", G1, R, **_EIN))
    return TensorField(nR, "ddddd", spacing=g.spacing, chart=g.chart)


def sectional(g: Metric, R: TensorField, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sectional curvature ``R(u, v, u, v) / |u∧v|²`` of the plane spanned by ``u, v``."""
    G = g.components
    num = np.einsum("...abcd,...a,...b,...c,...d->...", R.components, u, v, u, v, **_EIN)
    uu = np.einsum("...ab,...a,...b->...", G, u, u)
    vv = np.einsum("...ab,...a,...b->...", G, v, v)
    uv = np.einsum("...ab,...a,...b->...", G, u, v)
    return num / (uu * vv - uv**2)


@dataclass(frozen=True, eq=False)
class CurvatureBundle:
    g: Metric
    J: TensorField
    christoffel: TensorField
    riemann: TensorField
    r0: TensorField
    nablaJ: TensorField
    nabla2J: TensorField
    nablaR: TensorField | None
    r_values: np.ndarray


def curvature_bundle(spec, chart: Chart, plus: bool = False, interior_only: bool = True) -> CurvatureBundle:
    """All curvature fields on the output r-slices of ``chart``.

    Evaluates on the interior sub-box by default (the box the estimates are
    reported on).  ``plus`` adds ``∇R``, which needs third-order jets.
    """
    from .models import GeometricModel

    model = GeometricModel(spec, chart.h_x)
    pts = chart.grid_points()
    if interior_only:
        pts = pts[(slice(None),) + chart.interior]
    order = 3 if plus else 2
    gj = model.metric_jet(pts, order)
    Jj = model.J_jet(pts, 2)
    g = Metric(gj[0], derivs=tuple(gj[1:]), gauss=True)
    J = TensorField(Jj[0], "ud", derivs=tuple(Jj[1:]))
    gam = christoffel(g)
    R = riemann(g, gam)
    R0 = r0_tensor(g, J)
    nJ = covariant_deriv_J(g, gam, J, 1)
    n2J = covariant_deriv_J(g, gam, J, 2)
    nR = covariant_deriv_R(g, gam) if plus else None
    return CurvatureBundle(g, J, gam, R, R0, nJ, n2J, nR, chart.r_values.copy())


def _slice_max(values, nslices):
    return np.max(values.reshape(nslices, -1), axis=1)


def deficits(bundle: CurvatureBundle) -> dict:
    """Per-slice maxima of ``‖R−R0‖``, ``‖∇J‖``, ``‖∇R‖`` and ``‖∇²J‖``."""
    g = bundle.g
    k = bundle.r_values.size
    diff = TensorField(bundle.riemann.components - bundle.r0.components, "dddd")
    out = {
        "alch": Series("alch", bundle.r_values, _slice_max(g_norm(g, diff), k)),
        "ak": Series("ak", bundle.r_values, _slice_max(g_norm(g, bundle.nablaJ), k)),
        "ak_plus": Series("ak_plus", bundle.r_values, _slice_max(g_norm(g, bundle.nabla2J), k)),
    }
    if bundle.nablaR is not None:
        out["alch_plus"] = Series("alch_plus", bundle.r_values, _slice_max(g_norm(g, bundle.nablaR), k))
    return out


def sectional_sanity(bundle: CurvatureBundle, n_dirs: int = 16, seed: int = 0) -> float:
    """Largest excursion of ``sec(∂r, u)`` outside ``[-1-δ, -1/4+δ]`` with ``δ`` = 1.5 × slice deficit.

    Returns the maximum violation (≤ 0 means every sample is inside the band).
    """
    g = bundle.g
    G = g.components
    D = G.shape[-1]
    k = bundle.r_values.size
    defs = deficits(bundle)["alch"].values
    rng = np.random.default_rng(seed)
    dr = np.zeros(G.shape[:-1])
    dr[..., 0] = 1.0
    worst = -np.inf
    for _ in range(n_dirs):
        u = np.zeros(G.shape[:-1])
        u[..., 1:] = rng.standard_normal(D - 1)
        s = sectional(g, bundle.riemann, dr, u).reshape(k, -1)
        delta = 1.5 * defs[:, None] + 1e-9
        viol = np.maximum(-1.0 - delta - s, s - (-0.25 + delta))
        worst = max(worst, float(np.max(viol)))
    return worst
