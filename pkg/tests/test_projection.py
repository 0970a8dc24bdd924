import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate
from scipy import stats

from qbound.distributions import Exponential, Gaussian
from qbound.errors import (
    ConfigError,
    DegenerateEstimandError,
    IllPosedConstraintError,
    NonIdentifiedError,
)
from qbound.projection import (
    MomentModel,
    el_asymptotic_bound,
    el_divergence,
    el_path,
    el_projection,
    moment_model_from_config,
    numerical_semiparametric_bound,
    orthogonal_part,
    projection_path,
    q_projection_linear,
    semiparametric_bound,
)
from qbound.bounds import asymptotic_sweep


def gaussian_x2():
    return MomentModel(Gaussian(0, 1), phi=lambda x: x, h=lambda x: x**2)


def quad_var(f, pdf, a=-np.inf, b=np.inf):
    mean = sp_integrate.quad(lambda x: f(x) * pdf(x), a, b, epsabs=1e-13)[0]
    return sp_integrate.quad(lambda x: (f(x) - mean) ** 2 * pdf(x), a, b, epsabs=1e-13)[0]


def test_gaussian_x2_variance_against_scipy():
    oracle = quad_var(lambda x: x * x, stats.norm.pdf)
    assert oracle == pytest.approx(2.0, rel=1e-10)
    model = gaussian_x2()
    assert model.theta0 == pytest.approx(1.0, abs=1e-12)
    for n in (1, 2, 5, 10):
        assert semiparametric_bound(model, n) == pytest.approx(oracle, abs=1e-9)


def test_component_in_constraint_span_is_removed():
    model = MomentModel(Gaussian(0, 1), phi=lambda x: x, h=lambda x: x + x**2)
    part = orthogonal_part(model)
    assert part.coefficients == pytest.approx([1.0], abs=1e-10)
    assert part.variance == pytest.approx(2.0, rel=1e-10)


def test_exponential_base_against_scipy():
    # h_perp = x^2 - 4 (x - 1) under Exp(1)
    model = MomentModel(Exponential(1), phi=lambda x: x - 1, h=lambda x: x**2)
    oracle = quad_var(lambda x: x * x - 4 * (x - 1), stats.expon.pdf, 0, np.inf)
    assert oracle == pytest.approx(4.0, rel=1e-9)
    assert semiparametric_bound(model) == pytest.approx(oracle, rel=1e-9)


def test_two_constraints():
    model = MomentModel(Gaussian(0, 1), phi=lambda x: np.vstack([x, x**3]), h=lambda x: x**2)
    assert semiparametric_bound(model) == pytest.approx(2.0, rel=1e-10)


def test_degenerate_estimand():
    model = MomentModel(Gaussian(0, 1), phi=lambda x: x, h=lambda x: 3 * x)
    with pytest.raises(DegenerateEstimandError):
        semiparametric_bound(model)


def test_model_validation():
    with pytest.raises(ValueError):
        MomentModel(Gaussian(1, 1), phi=lambda x: x, h=lambda x: x**2)
    with pytest.raises(ValueError):
        MomentModel(Gaussian(0, 1), phi=lambda x: x)
    with pytest.raises(ValueError):
        MomentModel(Gaussian(0, 1), phi_theta=lambda t, x: x - t)
    with pytest.raises(ValueError):
        MomentModel(Gaussian(0, 1), phi_theta=lambda t, x: x - t, theta0=0.5)
    with pytest.raises(ValueError):
        MomentModel(Gaussian(0, 1), phi=lambda x: x, h=lambda x: x**2, theta0=3.0)


@pytest.mark.parametrize("theta", [0.2, 0.7, 1.5, 2.0, 3.0])
def test_projection_postconditions(theta):
    result = q_projection_linear(gaussian_x2(), theta)
    assert result.divergence == pytest.approx((1 - theta) ** 2 / 2, rel=1e-12)
    assert set(result.check_residuals) == {"mass", "phi_0", "estimand", "divergence"}
    assert result.max_residual <= 1e-6


def test_example3_at_two():
    result = q_projection_linear(gaussian_x2(), 2.0)
    assert result.divergence == pytest.approx(0.5)
    x = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(result.density(x), 1 + (x**2 - 1) / 2, atol=1e-12)
    assert result.is_valid_density
    assert not q_projection_linear(gaussian_x2(), 0.0).is_valid_density


def test_parabola_fit_recovers_inverse_variance():
    model = gaussian_x2()
    thetas = np.linspace(0.8, 1.2, 9)
    measured = []
    for t in thetas:
        r = q_projection_linear(model, t)
        measured.append(r.divergence + r.check_residuals["divergence"])
    curvature = np.polyfit(thetas - model.theta0, measured, 2)[0]
    assert curvature == pytest.approx(1 / 2, rel=1e-6)


@pytest.mark.parametrize("eps", [-0.05, 0.02, 0.1])
def test_projection_is_optimal(eps):
    # the fourth Hermite polynomial is orthogonal to 1, x and x^2, so adding it
    # keeps every constraint and can only increase the divergence
    base = Gaussian(0, 1)
    r = q_projection_linear(gaussian_x2(), 1.6)

    def perturbed(x):
        return r.density(x) + eps * (x**4 - 6 * x**2 + 3)

    def under_mu(g):
        return sp_integrate.quad(lambda x: g(x) * base.pdf(x), -np.inf, np.inf, epsabs=1e-12)[0]

    m = [under_mu(lambda x, k=k: x**k * perturbed(x)) for k in range(3)]
    m.append(under_mu(lambda x: (1 - perturbed(x)) ** 2))

    assert m[:3] == pytest.approx([1.0, 0.0, 1.6], abs=1e-9)
    assert m[3] == pytest.approx(r.divergence + 24 * eps**2, rel=1e-8)
    assert m[3] > r.divergence


def test_numerical_bound_finds_variance():
    model = gaussian_x2()
    for n in (1, 2, 5, 10):
        report = numerical_semiparametric_bound(model, n)
        assert report.B_psi_n <= 2.0 + 1e-6
        assert report.B_psi_n == pytest.approx(2.0, abs=1e-5)


def test_projection_path_divergence_is_consistent():
    model = gaussian_x2()
    path = projection_path(model)
    assert path.theta_range == pytest.approx((1 - 4 * math.sqrt(2), 1 + 4 * math.sqrt(2)))
    assert path.divergence(2.0) == pytest.approx(0.5)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(path.ratio(2.0, x), 1 + (x**2 - 1) / 2, atol=1e-12)


def el_location():
    return MomentModel(Gaussian(0, 1), phi_theta=lambda t, x: x - t, theta0=0.0)


def test_el_location_divergence():
    model = el_location()
    for theta in (-0.5, 0.3, 1.0):
        assert el_divergence(model, theta) == pytest.approx(theta**2, rel=1e-10)
    assert el_divergence(model, 0.0) == pytest.approx(0.0, abs=1e-20)


def test_el_projection_postconditions():
    r = el_projection(el_location(), 0.3)
    assert r.divergence == pytest.approx(0.09, rel=1e-10)
    assert r.max_residual <= 1e-6
    np.testing.assert_allclose(r.density(np.array([0.0, 1.0])), [1.0, 1.3], atol=1e-10)


def test_el_two_equations():
    model = MomentModel(Gaussian(0, 1), theta0=0.0,
                        phi_theta=lambda t, x: np.vstack([x - t, x**2 - t**2 - 1]))
    assert el_divergence(model, 0.0) == pytest.approx(0.0, abs=1e-18)
    assert el_divergence(model, 0.4) > 0
    assert el_projection(model, 0.4).max_residual <= 1e-6
    assert el_asymptotic_bound(model) == pytest.approx(1.0, abs=1e-8)


def test_el_overidentified_bound_not_above_location():
    model = MomentModel(Gaussian(0, 1), theta0=0.0,
                        phi_theta=lambda t, x: np.vstack([x - t, np.tanh(x - t)]))
    assert el_asymptotic_bound(model) <= 1.0 + 1e-9


def test_el_exponential_rate():
    # E[X - 1/theta] = 0 under Exp(1): D = 1, Omega = var(X) = 1
    model = MomentModel(Exponential(1), phi_theta=lambda t, x: x - 1 / t, theta0=1.0)
    assert el_asymptotic_bound(model) == pytest.approx(1.0, rel=1e-8)


def test_el_singular_covariance():
    model = MomentModel(Gaussian(0, 1), theta0=0.0,
                        phi_theta=lambda t, x: np.vstack([x - t, 2 * (x - t)]))
    with pytest.raises(IllPosedConstraintError):
        el_divergence(model, 0.2)


def test_el_not_identified():
    model = MomentModel(Gaussian(0, 1), theta0=0.0, phi_theta=lambda t, x: x)
    with pytest.raises(NonIdentifiedError):
        el_asymptotic_bound(model)


def test_el_sweep_reaches_asymptotic_bound():
    path = el_path(el_location(), (-2.0, 2.0))
    sweep = asymptotic_sweep(path, 200, n_values=[1, 10, 200])
    assert all(b == pytest.approx(1.0, abs=1e-3) for _, b in sweep)


def test_linear_config():
    model = moment_model_from_config(
        {"base": {"family": "gaussian", "mean": 0, "variance": 1}, "phi": ["x"], "h": "x2"})
    assert semiparametric_bound(model) == pytest.approx(2.0, rel=1e-10)
    model = moment_model_from_config(
        {"base": {"family": "gaussian", "mean": 0, "variance": 1}, "phi": [[0, 1]],
         "h": [0, 1, 1]})
    assert semiparametric_bound(model) == pytest.approx(2.0, rel=1e-10)


def test_el_config():
    model = moment_model_from_config(
        {"base": {"family": "gaussian", "mean": 0, "variance": 1}, "phi_theta": ["x"],
         "theta0": 0})
    assert model.mode == "el"
    assert el_divergence(model, 0.3) == pytest.approx(0.09, rel=1e-10)


@pytest.mark.parametrize("cfg", [
    {"phi": ["x"], "h": "x2"},
    {"base": {"family": "gaussian", "mean": 0, "variance": 1}, "phi": ["x"]},
    {"base": {"family": "gaussian", "mean": 0, "variance": 1}, "phi": ["x"], "h": "x5"},
    {"base": {"family": "gaussian", "mean": 0, "variance": 1}, "phi": ["x"], "h": "x2",
     "weights": 1},
    {"base": {"family": "gaussian", "mean": 1, "variance": 1}, "phi": ["x"], "h": "x2"},
    {"base": {"family": "gaussian", "mean": 0, "variance": 1}, "phi": ["x"],
     "h": [0, 0, 0, 0, 0, 1]},
    "x2",
])
def test_config_errors(cfg):
    with pytest.raises(ConfigError):
        moment_model_from_config(cfg)
