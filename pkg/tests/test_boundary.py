import jax
import numpy as np
import pytest

from alch.boundary import BoundaryEstimator, boundary_data, norm_bilinear, norm_covector, norm_endo, norm_vector
from alch.chart import Chart
from alch.models import KAPPA, ModelSpec, sphere_coframe

from conftest import SMALL, model_of, run_boundary

IDENTITIES = ("phi_sq_plus_id", "phi_cubed_plus_phi", "eta0_phi", "gamma_phi_invariance", "phi_xi0")


def horo_closed_form(x):
    P = x.shape[0]
    theta = np.stack([KAPPA * x[:, 1], -KAPPA * x[:, 0], np.ones(P)], axis=1)
    gamma = np.broadcast_to(np.diag([1.0, 1.0, 0.0]), (P, 3, 3))
    xi = np.broadcast_to([0.0, 0.0, 1.0], (P, 3))
    return theta, gamma, xi


def polar_closed_form(x):
    S = np.asarray(jax.vmap(sphere_coframe)(x))
    eta = 0.5 * S[:, 0]
    gamma = np.einsum("pi,pj->pij", S[:, 1], S[:, 1]) + np.einsum("pi,pj->pij", S[:, 2], S[:, 2])
    xi = 2.0 * np.linalg.inv(S)[:, :, 0]
    return eta, gamma, xi


def test_horo_closed_form(horo):
    data, _ = horo
    theta, gamma, xi = horo_closed_form(data.base_points)
    assert np.max(np.abs(data.eta0 - theta)) < 1e-6
    assert np.max(np.abs(data.gamma - gamma)) < 1e-6
    assert np.max(np.abs(data.xi0 - xi)) < 1e-6
    assert np.max(np.abs(data.xi0_kernel - xi)) < 1e-6


def test_polar_closed_form():
    data, _ = run_boundary("cph_polar")
    eta, gamma, xi = polar_closed_form(data.base_points)
    assert np.max(np.abs(data.eta0 - eta)) < 1e-5
    assert np.max(np.abs(data.gamma - gamma)) < 1e-5
    assert np.max(np.abs(data.xi0 - xi)) < 1e-5


@pytest.mark.parametrize("kind, a, eps", [("cph_horo", 1.25, 0.0), ("cph_polar", 1.25, 0.0),
                                          ("perturbed_metric", 2.0, 0.2), ("rotated_J", 1.25, 0.1)])
def test_limit_identities(kind, a, eps):
    data, _ = run_boundary(kind, a, eps)
    inv = data.invariants
    for key in IDENTITIES:
        assert inv[key] <= 1e-5, key
    assert inv["eta0_xi0_minus_1"] < 1e-6
    assert inv["gamma_xi0_xi0"] < 1e-6
    assert inv["gamma_second_eig_min"] > 0.1
    assert inv["phi_evolution_max"] <= 1e-5
    assert inv["reconstruction"] < 1e-8


def test_horo_coframe_fields(horo):
    data, fr = horo
    cof = fr["coframes"]
    assert np.max(np.abs(cof.u)) < 1e-8
    assert data.invariants["eta_ode_max"] < 1e-6
    assert data.invariants["gamma_definition_vs_sum"] < 1e-8


def test_pinching_and_diagnostics(horo):
    data, _ = horo
    d = data.diagnostics
    assert d["pinching_holds"]
    assert d["pinching_lambda"] >= 1.0
    assert d["coframe_min_singular_value"] > 0.1
    assert d["j_admissible"]
    assert data.flags == ()


def test_seed_independence(horo):
    data, _ = horo
    other, _ = run_boundary("cph_horo", seed=3)
    assert other.diagnostics["axis_order"] != data.diagnostics["axis_order"]
    for name in ("eta0", "gamma", "xi0", "phi"):
        assert np.max(np.abs(getattr(other, name) - getattr(data, name))) < 1e-6


def test_fault_copy(horo):
    data, _ = horo
    bad = data.with_fault(gamma_scale=2.0, phi_sign=-1.0)
    np.testing.assert_array_equal(bad.gamma, 2 * data.gamma)
    np.testing.assert_array_equal(bad.phi, -data.phi)
    assert data.faults == {} and bad.faults["phi_sign"] == -1.0


def test_norms_are_g0_norms():
    G = np.diag([1.0, 4.0, 9.0])[None]
    assert norm_covector(G, np.array([[0.0, 2.0, 0.0]]))[0] == pytest.approx(1.0)
    assert norm_vector(G, np.array([[0.0, 0.5, 0.0]]))[0] == pytest.approx(1.0)
    assert norm_bilinear(G, G)[0] == pytest.approx(np.sqrt(3.0))
    assert norm_endo(G, np.eye(3)[None])[0] == pytest.approx(np.sqrt(3.0))


def test_summary_and_json(horo, tmp_path):
    data, _ = horo
    s = data.summary()
    assert len(s["corners"]) == 8
    assert s["norms"]["xi0"] == pytest.approx(np.exp(SMALL.r_min), rel=1e-6)
    data.dump(tmp_path / "b.json")
    import json
    doc = json.loads((tmp_path / "b.json").read_text())
    assert np.array(doc["gamma"]).shape == (125, 3, 3)


def test_estimator_api():
    est = BoundaryEstimator(chart=SMALL, seed=1)
    assert est.get_params()["seed"] == 1
    est.fit(ModelSpec("cph_horo", 1))
    X = est.transform()
    assert X.shape == (125, 3 + 9 + 3 + 9)
    theta, _, _ = horo_closed_form(SMALL.base_points)
    np.testing.assert_allclose(X[:, :3], theta, atol=1e-6)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError, match="dim_boundary"):
        boundary_data(model_of("cph_horo"), Chart(grid=(5,) * 5, dim_boundary=5, base_box=((-0.3, 0.3),) * 5))
