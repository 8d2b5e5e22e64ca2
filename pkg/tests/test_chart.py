import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alch.chart import (FD_COEFFS, Chart, Metric, TensorField, g_norm, metric_inner, partial_fd,
                        riemann_symmetry_defect, stencil_apply)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def spd(rng, d, batch=()):
    A = rng.standard_normal(batch + (d, d))
    return A @ np.swapaxes(A, -1, -2) + d * np.eye(d)


class TestChart:
    def test_defaults_and_sampling(self):
        c = Chart()
        assert c.dim == 4 and c.n == 1
        assert c.r_values[0] == 0.5 and c.r_values[-1] == pytest.approx(12.0)
        assert c.base_points.shape == (343, 3)
        assert c.interior_mask().sum() == 27
        assert c.grid_points().shape == (c.r_values.size, 7, 7, 7, 4)

    @pytest.mark.parametrize("kw, msg", [
        ({"grid": (4, 7, 7)}, "chart.grid must be ≥ 5"),
        ({"grid": (-1, 7, 7)}, "chart.grid must be ≥ 5"),
        ({"r_max": 0.1}, "r_max"),
        ({"h_x": 0.0}, "h_x"),
        ({"r_step": 0.013}, "integer multiple"),
        ({"dim_boundary": 4}, "odd"),
    ])
    def test_validation(self, kw, msg):
        with pytest.raises(ValueError, match=msg):
            Chart(**kw)

    def test_replace_roundtrip(self):
        c = Chart().replace(grid=(5, 5, 5))
        assert c.grid == (5, 5, 5)
        assert Chart(**{**c.to_dict(), "base_box": tuple(map(tuple, c.to_dict()["base_box"])),
                        "grid": tuple(c.to_dict()["grid"])}) == c


class TestTensorField:
    def test_readonly_and_valence(self, rng):
        T = TensorField(rng.standard_normal((3, 4, 4, 4)), "udd")
        assert T.valence == (2, 1)
        assert T.grid_shape == (3,)
        with pytest.raises(ValueError):
            T.components[0, 0, 0, 0] = 1.0

    def test_symmetry_declared_and_violated(self, rng):
        A = rng.standard_normal((2, 3, 3))
        with pytest.raises(ValueError, match="symmetric symmetry violated"):
            TensorField(A, "dd", symmetry="symmetric")
        TensorField(A - np.swapaxes(A, -1, -2), "dd", symmetry="antisymmetric")

    def test_metric_not_pd(self):
        with pytest.raises(ValueError, match="not positive definite"):
            Metric(np.diag([1.0, -1.0]))

    def test_mismatch_errors(self, rng):
        g = Metric(spd(rng, 3, (2,)))
        a = TensorField(rng.standard_normal((2, 3)), "d")
        b = TensorField(rng.standard_normal((2, 3)), "u")
        with pytest.raises(ValueError, match="valence mismatch"):
            metric_inner(g, a, b)
        with pytest.raises(ValueError, match="chart mismatch"):
            metric_inner(g, a, TensorField(rng.standard_normal((5, 3)), "d"))

    def test_riemann_defect_of_constant_curvature(self):
        g = np.eye(3)
        R = np.einsum("ac,bd->abcd", g, g) - np.einsum("ad,bc->abcd", g, g)
        assert riemann_symmetry_defect(R) == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c1=finite, c2=finite, slots=st.sampled_from(["d", "u", "dd", "ud", "ddu"]))
def test_metric_inner_symmetric_bilinear(seed, c1, c2, slots):
    rng = np.random.default_rng(seed)
    d = 3
    g = Metric(spd(rng, d, (2,)))
    shape = (2,) + (d,) * len(slots)
    A, B, C = (TensorField(rng.standard_normal(shape), slots) for _ in range(3))
    ab, ba = metric_inner(g, A, B), metric_inner(g, B, A)
    np.testing.assert_allclose(ab, ba, rtol=1e-12, atol=1e-12)
    lin = TensorField(c1 * A.components + c2 * C.components, slots)
    np.testing.assert_allclose(metric_inner(g, lin, B), c1 * ab + c2 * metric_inner(g, C, B), rtol=1e-10, atol=1e-9)
    assert np.all(metric_inner(g, A, A) >= 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_g_norm_triangle_and_operator_bound(seed):
    rng = np.random.default_rng(seed)
    g = Metric(spd(rng, 3, (2,)))
    A = TensorField(rng.standard_normal((2, 3, 3)), "dd")
    B = TensorField(rng.standard_normal((2, 3, 3)), "dd")
    assert np.all(g_norm(g, A + B) <= g_norm(g, A) + g_norm(g, B) + 1e-12)
    op = g_norm(g, A, "operator")
    assert np.all(op <= g_norm(g, A) * (1 + 1e-10))
    # for a bilinear form the operator norm is the largest singular value in an orthonormal frame
    L = np.linalg.cholesky(g.inverse)
    sv = np.linalg.svd(np.swapaxes(L, -1, -2) @ A.components @ L, compute_uv=False)[:, 0]
    np.testing.assert_allclose(op, sv, rtol=1e-8)


def test_g_norm_euclidean_vector():
    g = Metric(np.eye(3))
    assert g_norm(g, TensorField(np.array([3.0, 4.0, 0.0]), "u")) == pytest.approx(5.0)


class TestStencils:
    def test_coefficients_consistent(self):
        x = np.arange(-2, 3, dtype=float)
        assert np.dot(FD_COEFFS[1], x) == pytest.approx(1.0)
        assert np.dot(FD_COEFFS[2], x**2) == pytest.approx(2.0)

    @settings(max_examples=30, deadline=None)
    @given(coef=arrays(float, 5, elements=finite), h=st.floats(0.05, 0.5))
    def test_exact_on_quartics_interior(self, coef, h):
        x = h * np.arange(9)
        p = np.polynomial.Polynomial(coef)
        for order in (1, 2):
            d, flag = stencil_apply(p(x), 0, h, order)
            exact = p.deriv(order)(x)
            scale = 1 + np.max(np.abs(exact))
            assert np.max(np.abs(d[2:-2] - exact[2:-2])) <= 1e-8 * scale / h**order
            assert flag.tolist() == [True, True] + [False] * 5 + [True, True]

    def test_fourth_order_convergence(self):
        errs = []
        for m in (21, 41):
            x = np.linspace(0, 1, m)
            d, _ = stencil_apply(np.sin(3 * x), 0, x[1] - x[0], 1)
            errs.append(np.max(np.abs(d[2:-2] - 3 * np.cos(3 * x[2:-2]))))
        assert 12 < errs[0] / errs[1] < 20

    def test_too_small(self):
        with pytest.raises(ValueError, match="grid too small"):
            stencil_apply(np.zeros(4), 0, 0.1, 1)

    def test_partial_fd_marks_edges(self):
        x = np.linspace(0, 1, 7)
        T = TensorField(np.stack([x**2, x], axis=-1), "d", spacing=(x[1] - x[0],))
        D = partial_fd(T, 0)
        np.testing.assert_allclose(D.components[:, 0], 2 * x, atol=1e-12)
        assert D.low_accuracy.sum() == 4
