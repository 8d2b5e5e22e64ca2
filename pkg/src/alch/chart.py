"""Fermi-coordinate charts, tensor-field storage, metric algebra and finite differences.

Coordinates are ordered ``(r, x^1, ..., x^{2n+1})``.  Tensor fields carry a
``slots`` string with one character per index, ``"u"`` for a contravariant
(upper) index and ``"d"`` for a covariant (lower) one, in the same order as the
trailing axes of the component array.  Derivative arrays of jets append one
trailing axis per derivative, e.g. ``dg[..., a, b, c] = d_c g_ab``.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Chart",
    "TensorField",
    "Metric",
    "metric_inner",
    "g_norm",
    "partial_fd",
    "stencil_apply",
    "FD_COEFFS",
]

# Five-point central stencils (fourth order) and three/four-point one-sided
# second-order stencils for the two edge samples on each side.
FD_COEFFS = {
    1: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0),
    2: (np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0),
}
_ONE_SIDED = {
    1: np.array([-3.0, 4.0, -1.0]) / 2.0,
    2: np.array([2.0, -5.0, 4.0, -1.0]),
}


def _as_interval_list(box, dim):
    out = []
    for item in box:
        lo, hi = (float(v) for v in item)
        if not hi > lo:
            raise ValueError(f"chart.base_box interval ({lo}, {hi}) is empty")
        out.append((lo, hi))
    if len(out) != dim:
        raise ValueError(f"chart.base_box needs {dim} intervals, got {len(out)}")
    return tuple(out)


@dataclass(frozen=True)
class Chart:
    """One Fermi chart: radial extent, base box and sampling."""

    dim_boundary: int = 3
    r_min: float = 0.5
    r_max: float = 12.0
    base_box: tuple = ((-0.25, 0.25), (-0.25, 0.25), (-0.25, 0.25))
    grid: tuple = (7, 7, 7)
    h_x: float = 1e-3
    h_r: float = 1e-2
    r_step: float = 0.25
    margin: int = 2

    def __post_init__(self):
        d = int(self.dim_boundary)
        if d < 3 or d % 2 == 0:
            raise ValueError("chart.dim_boundary must be odd and ≥ 3")
        object.__setattr__(self, "dim_boundary", d)
        if not np.isfinite(self.r_min) or self.r_min < 0:
            raise ValueError("chart.r_min must be ≥ 0")
        if not self.r_max > self.r_min:
            raise ValueError("chart.r_max must exceed chart.r_min")
        box = self.base_box
        if len(box) == 1 and d > 1:
            box = tuple(box) * d
        object.__setattr__(self, "base_box", _as_interval_list(box, d))
        grid = tuple(int(g) for g in (self.grid if np.ndim(self.grid) else (self.grid,) * d))
        if len(grid) == 1 and d > 1:
            grid = grid * d
        if len(grid) != d:
            raise ValueError(f"chart.grid needs {d} counts, got {len(grid)}")
        if any(g < 5 for g in grid):
            raise ValueError("chart.grid must be ≥ 5")
        object.__setattr__(self, "grid", grid)
        for name in ("h_x", "h_r", "r_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"chart.{name} must be positive")
        ratio = self.r_step / self.h_r
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("chart.r_step must be an integer multiple of chart.h_r")
        span = (self.r_max - self.r_min) / self.h_r
        if abs(span - round(span)) > 1e-6:
            raise ValueError("chart.r_max - chart.r_min must be an integer multiple of chart.h_r")
        if self.margin < 0 or 2 * self.margin >= min(grid):
            raise ValueError("chart.margin leaves no interior points")

    # -- derived sampling -------------------------------------------------
    @property
    def n(self) -> int:
        return (self.dim_boundary - 1) // 2

    @property
    def dim(self) -> int:
        return self.dim_boundary + 1

    @property
    def n_fine(self) -> int:
        return int(round((self.r_max - self.r_min) / self.h_r))

    @property
    def fine_r(self) -> np.ndarray:
        return self.r_min + self.h_r * np.arange(self.n_fine + 1)

    @property
    def stride(self) -> int:
        return int(round(self.r_step / self.h_r))

    @property
    def r_values(self) -> np.ndarray:
        """Output r-slices: every ``stride``-th fine sample."""
        return self.fine_r[:: self.stride]

    @property
    def base_axes(self) -> list:
        return [np.linspace(lo, hi, m) for (lo, hi), m in zip(self.base_box, self.grid)]

    @property
    def base_spacing(self) -> tuple:
        return tuple(float(ax[1] - ax[0]) for ax in self.base_axes)

    @property
    def base_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.base_axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    @property
    def interior(self) -> tuple:
        m = self.margin
        return tuple(slice(m, g - m) for g in self.grid)

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid, dtype=bool)
        mask[self.interior] = True
        return mask.reshape(-1)

    def grid_points(self, r_values=None) -> np.ndarray:
        """All ``(r, x)`` points, shape ``(len(r), *grid, dim)``."""
        r = self.r_values if r_values is None else np.asarray(r_values, dtype=float)
        base = self.base_points.reshape(*self.grid, self.dim_boundary)
        out = np.empty((r.size, *self.grid, self.dim))
        out[..., 0] = r.reshape((-1,) + (1,) * len(self.grid))
        out[..., 1:] = base[None]
        return out

    def grid_spacing(self) -> tuple:
        """Spacing for every axis of a field sampled by :meth:`grid_points`."""
        return (self.r_step,) + self.base_spacing

    def replace(self, **kw) -> "Chart":
        vals = {f: getattr(self, f) for f in self.__dataclass_fields__}
        vals.update(kw)
        return Chart(**vals)

    def to_dict(self) -> dict:
        return {
            "dim_boundary": self.dim_boundary,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "base_box": [list(b) for b in self.base_box],
            "grid": list(self.grid),
            "h_x": self.h_x,
            "h_r": self.h_r,
            "r_step": self.r_step,
            "margin": self.margin,
        }


def _check_symmetry(comp, symmetry, tol):
    if symmetry == "none":
        return
    scale = max(float(np.max(np.abs(comp))) if comp.size else 0.0, 1e-300)
    if symmetry == "symmetric":
        err = np.max(np.abs(comp - np.swapaxes(comp, -1, -2)))
    elif symmetry == "antisymmetric":
        err = np.max(np.abs(comp + np.swapaxes(comp, -1, -2)))
    elif symmetry == "riemann":
        err = riemann_symmetry_defect(comp)
    else:
        raise ValueError(f"unknown symmetry tag {symmetry!r}")
    if err > tol * scale:
        raise ValueError(f"declared {symmetry} symmetry violated: defect {err:.3e} vs scale {scale:.3e}")


def riemann_symmetry_defect(R) -> float:
    """Largest violation of the algebraic curvature identities (absolute)."""
    a = np.max(np.abs(R + np.swapaxes(R, -4, -3)))
    b = np.max(np.abs(R + np.swapaxes(R, -2, -1)))
    p = np.max(np.abs(R - np.moveaxis(R, (-4, -3), (-2, -1))))
    bianchi = R + np.einsum("...abcd->...acdb", R) + np.einsum("...abcd->...adbc", R)
    return float(max(a, b, p, np.max(np.abs(bianchi))))


@dataclass(frozen=True, eq=False)
class TensorField:
    """Coordinate components of a tensor field on a grid.

    ``components`` has shape ``grid_shape + (d,) * rank``.  ``derivs`` optionally
    holds jets: ``derivs[k]`` carries ``k+1`` extra trailing derivative axes.
    """

    components: np.ndarray
    slots: str
    symmetry: str = "none"
    spacing: tuple | None = None
    chart: Chart | None = None
    derivs: tuple = ()
    low_accuracy: np.ndarray | None = None
    sym_tol: float = 1e-12

    def __post_init__(self):
        comp = np.array(self.components, dtype=float)
        if any(c not in "ud" for c in self.slots):
            raise ValueError("slots must be a string over {'u', 'd'}")
        rank = len(self.slots)
        if comp.ndim < rank:
            raise ValueError("component array has fewer axes than the valence requires")
        if rank:
            dims = comp.shape[comp.ndim - rank:]
            if len(set(dims)) != 1:
                raise ValueError(f"index axes must share one dimension, got {dims}")
        if self.spacing is not None and len(self.spacing) != comp.ndim - rank:
            raise ValueError("spacing must give one step per grid axis")
        if not np.all(np.isfinite(comp)):
            raise ValueError("non-finite tensor components")
        _check_symmetry(comp, self.symmetry, self.sym_tol)
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)
        ders = []
        for d in self.derivs:
            d = np.array(d, dtype=float)
            d.setflags(write=False)
            ders.append(d)
        object.__setattr__(self, "derivs", tuple(ders))

    @property
    def rank(self) -> int:
        return len(self.slots)

    @property
    def valence(self) -> tuple:
        """(covariant count, contravariant count)."""
        return (self.slots.count("d"), self.slots.count("u"))

    @property
    def grid_shape(self) -> tuple:
        return self.components.shape[: self.components.ndim - self.rank]

    @property
    def index_dim(self) -> int:
        return self.components.shape[-1] if self.rank else 0

    def with_components(self, comp, **kw) -> "TensorField":
        vals = dict(slots=self.slots, symmetry=self.symmetry, spacing=self.spacing, chart=self.chart)
        vals.update(kw)
        return TensorField(comp, **vals)

    def __sub__(self, other: "TensorField") -> "TensorField":
        _check_compatible(self, other)
        sym = self.symmetry if self.symmetry == other.symmetry else "none"
        return self.with_components(self.components - other.components, symmetry=sym, sym_tol=1e-6)

    def __add__(self, other: "TensorField") -> "TensorField":
        _check_compatible(self, other)
        sym = self.symmetry if self.symmetry == other.symmetry else "none"
        return self.with_components(self.components + other.components, symmetry=sym, sym_tol=1e-6)


@dataclass(frozen=True, eq=False)
class Metric(TensorField):
    """Symmetric positive-definite (0,2) field with cached inverse."""

    slots: str = "dd"
    symmetry: str = "symmetric"
    gauss: bool = False
    inverse: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.slots != "dd":
            raise ValueError("a metric has slots 'dd'")
        if self.symmetry != "symmetric":
            raise ValueError("a metric is symmetric")
        super().__post_init__()
        g = self.components
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise ValueError("chart degeneracy: metric not positive definite") from None
        inv = np.linalg.inv(g)
        inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
        inv.setflags(write=False)
        object.__setattr__(self, "inverse", inv)
        if self.gauss:
            if np.any(g[..., 0, 0] != 1.0) or np.any(g[..., 0, 1:] != 0.0):
                raise ValueError("Gauss-form flag set but g(∂r,·) is not (1, 0, ..., 0)")


def _check_compatible(T1: TensorField, T2: TensorField):
    if T1.slots != T2.slots:
        raise ValueError(f"valence mismatch: {T1.slots!r} vs {T2.slots!r}")
    if T1.components.shape != T2.components.shape:
        raise ValueError("chart mismatch: component grids differ")
    if T1.chart is not None and T2.chart is not None and T1.chart != T2.chart:
        raise ValueError("chart mismatch")


def metric_inner(g: Metric, T1: TensorField, T2: TensorField) -> np.ndarray:
    """Full pointwise contraction of ``T1`` with ``T2`` through ``g`` and ``g^{-1}``."""
    _check_compatible(T1, T2)
    if T1.grid_shape != g.grid_shape:
        raise ValueError("chart mismatch: metric grid differs from tensor grid")
    if g.chart is not None and T1.chart is not None and g.chart != T1.chart:
        raise ValueError("chart mismatch")
    rank = T1.rank
    if rank == 0:
        return T1.components * T2.components
    letters = string.ascii_letters
    a = letters[:rank]
    b = letters[rank: 2 * rank]
    ops = [T1.components]
    subs = ["..." + a]
    for i, s in enumerate(T1.slots):
        ops.append(g.inverse if s == "d" else g.components)
        subs.append("..." + a[i] + b[i])
    ops.append(T2.components)
    subs.append("..." + b)
    return np.einsum(",".join(subs) + "->...", *ops, optimize=True)


def g_norm(g: Metric, T: TensorField, kind: str = "frobenius") -> np.ndarray:
    """Pointwise norm of ``T`` with respect to ``g``.

    ``kind="frobenius"`` is the Hilbert-Schmidt norm.  ``kind="operator"`` is the
    multilinear operator norm sup |T(u1, ..., uk)| over g-unit vectors, obtained
    in an orthonormal frame by a higher-order power iteration with restarts;
    it is implemented for fully covariant tensors.
    """
    if kind == "frobenius":
        return np.sqrt(np.maximum(metric_inner(g, T, T), 0.0))
    if kind != "operator":
        raise ValueError(f"unknown norm kind {kind!r}")
    if set(T.slots) != {"d"}:
        raise ValueError("operator norm implemented for covariant tensors only")
    if T.grid_shape != g.grid_shape:
        raise ValueError("chart mismatch: metric grid differs from tensor grid")
    L = np.linalg.cholesky(g.inverse)  # columns form a g-orthonormal frame
    comp = T.components
    # frame components T(e_i, ...) with e_i = L[:, i]
    letters = string.ascii_letters
    k = T.rank
    src = letters[:k]
    dst = letters[k: 2 * k]
    subs = ["..." + src] + ["..." + src[i] + dst[i] for i in range(k)]
    Tf = np.einsum(",".join(subs) + "->..." + dst, comp, *([L] * k), optimize=True)
    flat = Tf.reshape(-1, *Tf.shape[-k:])
    out = np.array([_hopm(t) for t in flat])
    return out.reshape(T.grid_shape)


def _hopm(t: np.ndarray, restarts: int = 12, iters: int = 200) -> float:
    k = t.ndim
    d = t.shape[0]
    rng = np.random.default_rng(12345)
    best = 0.0
    starts = [np.eye(d)[i] for i in range(d)] + [rng.standard_normal(d) for _ in range(restarts)]
    for s in starts:
        vs = [s / np.linalg.norm(s)]
        for _ in range(k - 1):
            v = rng.standard_normal(d)
            vs.append(v / np.linalg.norm(v))
        val = 0.0
        for _ in range(iters):
            for i in range(k):
                w = _contract_except(t, vs, i)
                nw = np.linalg.norm(w)
                if nw == 0:
                    break
                vs[i] = w / nw
            new = abs(_contract_all(t, vs))
            if abs(new - val) < 1e-15 * max(1.0, new):
                val = new
                break
            val = new
        best = max(best, val)
    return best


def _contract_except(t, vs, skip):
    w = t
    for j in reversed(range(t.ndim)):
        if j != skip:
            w = np.tensordot(w, vs[j], axes=([j], [0]))
    return w


def _contract_all(t, vs):
    w = t
    for j in reversed(range(t.ndim)):
        w = np.tensordot(w, vs[j], axes=([j], [0]))
    return float(w)


def stencil_apply(values: np.ndarray, axis: int, spacing: float, order: int):
    """Differentiate sampled values along ``axis``.

    Returns ``(derivative, low_accuracy_mask_along_axis)``.  Interior samples
    use the five-point fourth-order stencil, the two outer samples on each side
    one-sided second-order stencils.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    values = np.asarray(values, dtype=float)
    m = values.shape[axis]
    if m < 5:
        raise ValueError(f"grid too small for stencil: {m} samples along axis {axis}, need ≥ 5")
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    c = FD_COEFFS[order]
    out[2:-2] = sum(c[k] * v[k: m - 4 + k] for k in range(5) if c[k] != 0.0)
    one = _ONE_SIDED[order]
    w = len(one)
    for i in (0, 1):
        out[i] = sum(one[k] * v[i + k] for k in range(w))
        sign = -1.0 if order == 1 else 1.0
        out[m - 1 - i] = sign * sum(one[k] * v[m - 1 - i - k] for k in range(w))
    out /= spacing**order
    flag = np.zeros(m, dtype=bool)
    flag[[0, 1, m - 2, m - 1]] = True
    return np.moveaxis(out, 0, axis), flag


def partial_fd(T: TensorField, axis: int, order: int = 1, spacing: float | None = None) -> TensorField:
    """Coordinate derivative of every component of ``T`` along grid axis ``axis``."""
    ndim_grid = len(T.grid_shape)
    if not 0 <= axis < ndim_grid:
        raise ValueError(f"axis {axis} outside grid of dimension {ndim_grid}")
    if spacing is None:
        if T.spacing is None:
            raise ValueError("no spacing known for this field")
        spacing = T.spacing[axis]
    out, flag = stencil_apply(T.components, axis, spacing, order)
    shape = [1] * ndim_grid
    shape[axis] = flag.size
    mask = np.broadcast_to(flag.reshape(shape), T.grid_shape)
    if T.low_accuracy is not None:
        mask = mask | T.low_accuracy
    sym = T.symmetry if T.symmetry in ("symmetric", "antisymmetric") else "none"
    return TensorField(out, T.slots, symmetry=sym, spacing=T.spacing, chart=T.chart,
                       low_accuracy=np.array(mask), sym_tol=1e-10)
