import numpy as np
import pytest

from alch.chart import Chart
from alch.cr import (contact_check, contact_coefficient, cr_report, exterior_d, expansion_residual, h0_basis,
                     levi_and_reeb, nijenhuis_tensor)

from conftest import FULL, model_of

X = FULL.base_points


class TestExteriorD:
    def test_exact_form_is_closed(self):
        # f = x² y + sin t, df = (2xy, x², cos t)
        x, y, t = X.T
        df = np.stack([2 * x * y, x**2, np.cos(t)], axis=1)
        assert np.max(np.abs(exterior_d(df, FULL)[FULL.interior_mask()])) < 1e-8

    def test_constant_and_zero(self):
        np.testing.assert_array_equal(exterior_d(np.zeros_like(X), FULL), 0.0)
        assert np.max(np.abs(exterior_d(np.broadcast_to([1.0, 2.0, 3.0], X.shape), FULL))) < 1e-12

    def test_contact_form_derivative(self):
        # θ = dt + κ(y dx − x dy) has dθ(∂x, ∂y) = −2κ
        k = 0.5
        theta = np.stack([k * X[:, 1], -k * X[:, 0], np.ones(len(X))], axis=1)
        d = exterior_d(theta, FULL)
        np.testing.assert_allclose(d[:, 0, 1], -2 * k, atol=1e-10)
        np.testing.assert_allclose(d, -np.swapaxes(d, -1, -2), atol=0)

    def test_shape_and_margin_errors(self):
        with pytest.raises(ValueError, match="shape"):
            exterior_d(np.zeros((3, 3)), FULL)
        small = Chart(grid=(5, 5, 5), margin=2)
        assert exterior_d(np.zeros((125, 3)), small).shape == (125, 3, 3)


def test_contact_coefficient_values():
    eta = np.array([[0.0, 0.0, 1.0]])
    d = np.zeros((1, 3, 3))
    d[0, 0, 1], d[0, 1, 0] = -1.0, 1.0
    assert abs(contact_coefficient(eta, d)[0]) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="odd"):
        contact_coefficient(np.zeros((1, 4)), np.zeros((1, 4, 4)))


def test_exact_one_form_fails_contact():
    eta = np.broadcast_to([1.0, 0.0, 0.0], X.shape)
    _, ok = contact_check(eta, exterior_d(eta, FULL), mask=FULL.interior_mask())
    assert not ok


def test_horo_cr_report(horo_full):
    data, _ = horo_full
    rep = cr_report(data)
    assert rep.passed
    assert rep.levi_gap < 1e-6 and rep.reeb_gap < 1e-6 and rep.nijenhuis_gap < 1e-6
    assert rep.levi_eigen_min == pytest.approx(1.0, abs=1e-6)
    assert np.min(np.abs(rep.contact_coefficient)) > 0.5
    d = rep.to_dict()
    assert d["verdict"]["levi"] == "PASS" and d["passed"]


def test_h0_basis_is_gamma_orthonormal(horo_full):
    data, _ = horo_full
    H = h0_basis(data.eta0, data.xi0, data.gamma)
    assert np.max(np.abs(np.einsum("pi,pia->pa", data.eta0, H))) < 1e-8
    gram = np.einsum("pia,pij,pjb->pab", H, data.gamma, H)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-10)
    with pytest.raises(ValueError, match="H₀ basis"):
        h0_basis(np.zeros_like(data.eta0), data.xi0, data.gamma)


def test_gamma_fault_opens_levi_gap(horo_full):
    data, _ = horo_full
    rep = cr_report(data.with_fault(gamma_scale=2.0))
    assert not rep.verdict["levi"]
    assert rep.levi_gap > 0.1


def test_phi_flip_breaks_pseudoconvexity(horo_full):
    data, _ = horo_full
    lev = levi_and_reeb(data.with_fault(phi_sign=-1.0))
    assert lev.levi_eigen_min < 0
    assert not cr_report(data.with_fault(phi_sign=-1.0)).passed


def test_nijenhuis_of_constant_structure_vanishes():
    phi = np.broadcast_to(np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]), (len(X), 3, 3))
    N, dphi = nijenhuis_tensor(np.ascontiguousarray(phi), FULL)
    assert np.max(np.abs(N)) < 1e-12 and np.max(np.abs(dphi)) < 1e-12


def test_horo_expansion_residual_is_roundoff(horo_full):
    data, _ = horo_full
    out = expansion_residual(model_of("cph_horo"), data, noise_floor=data.diagnostics["decay_noise_floor"])
    assert out["series"].max() < 1e-6
    assert out["fit"].vanishing
