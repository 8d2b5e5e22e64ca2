"""Limits of r-series: three-point elimination refined by least squares.

The model is ``y(r) = L + C e^{-b r}``.  Everything is vectorised over any
trailing axes of the sample array, so one call extrapolates whole tensor fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

__all__ = ["ExtrapolationResult", "extrapolate_limit", "LimitExtrapolator", "fit_window"]

OK, CONSTANT, NON_MONOTONE, NO_CONVERGENCE = 0, 1, 2, 3
FLAG_NAMES = {OK: "ok", CONSTANT: "constant", NON_MONOTONE: "non_monotone", NO_CONVERGENCE: "plain_fallback"}


@dataclass(frozen=True, eq=False)
class ExtrapolationResult:
    limit: np.ndarray
    residual: np.ndarray
    slope: np.ndarray
    flags: np.ndarray
    bias: np.ndarray
    window: tuple

    def flag_counts(self) -> dict:
        return {FLAG_NAMES[k]: int(np.sum(self.flags == k)) for k in FLAG_NAMES}


def fit_window(r: np.ndarray, window=None, min_samples: int = 6) -> np.ndarray:
    """Indices of the fit window: default the last third of the range, at least ``min_samples`` points."""
    r = np.asarray(r, dtype=float)
    if r.size < min_samples:
        raise ValueError(f"need ≥ {min_samples} r-samples, got {r.size}")
    if window is None:
        lo = r[0] + 2.0 * (r[-1] - r[0]) / 3.0
        idx = np.nonzero(r >= lo - 1e-12)[0]
    else:
        idx = np.nonzero((r >= window[0] - 1e-12) & (r <= window[1] + 1e-12))[0]
    if idx.size < min_samples:
        if window is not None:
            raise ValueError(f"fit window {window} holds {idx.size} samples, need ≥ {min_samples}")
        idx = np.arange(r.size - min_samples, r.size)
    return idx


def _three_point(t, Y, i1, i2, i3):
    y1, y2, y3 = Y[i1], Y[i2], Y[i3]
    d1, d2 = y2 - y1, y3 - y2
    with np.errstate(divide="ignore", invalid="ignore"):
        q = d2 / d1
        L = y3 - d2 * q / (1.0 - q)
        b = -np.log(q) / (t[i3] - t[i2])
    return L, b, q


def _gauss_newton(t, Y, L, C, b, iters=30):
    """Refine ``Y ≈ L + C exp(-b t)`` columnwise; returns parameters and rms."""
    def resid(L, C, b):
        return Y - L - C * np.exp(-np.outer(t, b))

    r0 = resid(L, C, b)
    sse = np.sum(r0**2, axis=0)
    for _ in range(iters):
        e = np.exp(-np.outer(t, b))
        Jm = np.stack([np.ones_like(e), e, -C * t[:, None] * e], axis=-1)  # (m, M, 3)
        res = resid(L, C, b)
        A = np.einsum("mki,mkj->kij", Jm, Jm)
        g = np.einsum("mki,mk->ki", Jm, res)
        lam = 1e-12 * np.trace(A, axis1=1, axis2=2)[:, None, None]
        A = A + lam * np.eye(3)
        try:
            step = np.linalg.solve(A, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        accepted = np.zeros(L.shape, dtype=bool)
        scale = np.ones_like(L)
        for _ in range(8):
            Ln, Cn, bn = L + scale * step[:, 0], C + scale * step[:, 1], b + scale * step[:, 2]
            new = np.sum(resid(Ln, Cn, bn) ** 2, axis=0)
            ok = np.isfinite(new) & (new <= sse) & (bn > 0) & ~accepted
            L, C, b = np.where(ok, Ln, L), np.where(ok, Cn, C), np.where(ok, bn, b)
            sse = np.where(ok, new, sse)
            accepted |= ok
            scale = np.where(accepted, scale, scale / 2)
            if accepted.all():
                break
        if np.max(np.abs(step[:, 0]) * accepted) <= 1e-16 * (1 + np.max(np.abs(L))):
            break
    return L, C, b, np.sqrt(sse / t.size)


def extrapolate_limit(r, series, mode: str = "exp_fit", window=None, min_samples: int = 6,
                      rel_noise: float = 1e-10, min_rate: float = 0.05) -> ExtrapolationResult:
    """Extrapolate ``series[k, ...]`` sampled at ``r[k]`` to ``r → ∞``.

    ``plain`` returns the last sample (residual = last increment).  ``exp_fit``
    eliminates one exponential with three equally spaced tail samples, then
    refines ``(L, C, b)`` by Gauss-Newton on the window.  Tails flatter than the
    noise floor are reported as ``constant``; tails with increments of both
    signs above the floor fall back to ``plain`` and carry ``non_monotone``.
    Fitted rates below ``min_rate`` cannot be told apart from drift over the
    window; those entries also fall back to ``plain``.
    ``bias`` is the spread between the fit limit and a three-point limit taken
    on the later half of the window.
    """
    r = np.asarray(r, dtype=float)
    Y = np.asarray(series, dtype=float)
    if Y.shape[0] != r.size:
        raise ValueError("series leading axis must match r")
    if not np.all(np.isfinite(Y)):
        raise ValueError("non-finite samples in series")
    if mode not in ("plain", "exp_fit"):
        raise ValueError(f"unknown mode {mode!r}")
    idx = fit_window(r, window, min_samples)
    tail_shape = Y.shape[1:]
    Yw = Y[idx].reshape(idx.size, -1)
    t = r[idx] - r[idx[0]]
    plain_L = Yw[-1].copy()
    plain_res = np.abs(Yw[-1] - Yw[-2])
    M = Yw.shape[1]
    win = (float(r[idx[0]]), float(r[idx[-1]]))

    def pack(*arrs):
        return [a.reshape(tail_shape) for a in arrs]

    if mode == "plain":
        out = pack(plain_L, plain_res, np.full(M, np.nan), np.full(M, NO_CONVERGENCE), np.zeros(M))
        return ExtrapolationResult(*out, window=win)

    scale = np.max(np.abs(Yw), axis=0)
    floor = rel_noise * np.maximum(scale, 1e-300) + 1e-300
    span = np.max(Yw, axis=0) - np.min(Yw, axis=0)
    constant = span <= 8 * floor
    inc = np.diff(Yw, axis=0)
    big = np.abs(inc) > 8 * floor[None]
    pos = np.any(big & (inc > 0), axis=0)
    neg = np.any(big & (inc < 0), axis=0)
    nonmono = pos & neg & ~constant

    m = idx.size
    i1 = 0 if (m - 1) % 2 == 0 else 1
    i3 = m - 1
    i2 = (i1 + i3) // 2
    L0, b0, q = _three_point(t, Yw, i1, i2, i3)
    good = ~constant & ~nonmono & np.isfinite(L0) & (q > 0) & (q < 1)
    L = np.where(good, L0, plain_L)
    b = np.where(good, b0, 1.0)
    C = np.where(good, Yw[0] - L, 0.0)
    flags = np.full(M, OK)
    flags[constant] = CONSTANT
    flags[nonmono] = NON_MONOTONE
    flags[~good & ~constant & ~nonmono] = NO_CONVERGENCE
    slope = np.full(M, np.nan)
    residual = plain_res.copy()
    bias = np.zeros(M)
    if good.any():
        g = np.nonzero(good)[0]
        Lg, Cg, bg, rms = _gauss_newton(t, Yw[:, g], L[g], C[g], b[g])
        slow = bg < min_rate
        Lg = np.where(slow, plain_L[g], Lg)
        rms = np.where(slow, plain_res[g], rms)
        flags[g[slow]] = NO_CONVERGENCE
        L[g], slope[g], residual[g] = Lg, np.where(slow, np.nan, bg), rms
        # late-half three-point limit as a bias gauge
        j1 = i2 + ((i3 - i2) % 2)
        j2 = (j1 + i3) // 2
        if i3 - j1 >= 2:
            Ll, _, ql = _three_point(t, Yw[:, g], j1, j2, i3)
            okl = np.isfinite(Ll) & (ql > 0) & (ql < 1)
            bias[g] = np.where(okl, np.abs(Lg - Ll), np.abs(Lg - L0[g]))
        else:
            bias[g] = np.abs(Lg - L0[g])
        bias[g[slow]] = 0.0
    L = np.where(constant, Yw[-1], L)
    residual = np.where(constant, span, residual)
    out = pack(L, residual, slope, flags, bias)
    return ExtrapolationResult(*out, window=win)


class LimitExtrapolator(BaseEstimator):
    """Estimator wrapper around :func:`extrapolate_limit`.

    ``fit(r, Y)`` stores ``limit_``, ``residual_``, ``slope_`` and ``flags_``.
    ``transform(Y)`` extrapolates further series sampled on the same radii.
    """

    def __init__(self, mode: str = "exp_fit", window=None, min_samples: int = 6):
        self.mode = mode
        self.window = window
        self.min_samples = min_samples

    def fit(self, r, Y):
        res = extrapolate_limit(r, Y, self.mode, self.window, self.min_samples)
        self.r_ = np.asarray(r, dtype=float)
        self.limit_ = res.limit
        self.residual_ = res.residual
        self.slope_ = res.slope
        self.flags_ = res.flags
        self.bias_ = res.bias
        return self

    def transform(self, Y):
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "r_")
        return extrapolate_limit(self.r_, Y, self.mode, self.window, self.min_samples).limit
