import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbound.bounds import (
    FLAG_CONTINUITY,
    FLAG_INFINITE_BOUND,
    FLAG_INFINITE_D,
    FLAG_OK,
    LIMIT_AT_THETA0,
    ParametricPath,
    asymptotic_sweep,
    bound_curve,
    continuity_extension,
    cramer_rao_bound,
    fisher_information,
    golden_section_max,
    h_functional,
    optimize_bound,
)
from qbound.distributions import Exponential, Gaussian
from qbound.errors import (
    DegenerateModelError,
    DiscontinuousParameterError,
    InfiniteBoundError,
    NonDifferentiablePathError,
)
from qbound.models import (
    example1_h,
    example1_path,
    example2_h,
    example2_path,
    exponential_rate_path,
    gaussian_mean_path,
)


def smooth_paths():
    return [
        example1_path(),
        example2_path(),
        gaussian_mean_path(0.0, 1.0, "identity"),
        gaussian_mean_path(1.0, 2.0, "square", (0.0, 3.0)),
        exponential_rate_path(2.0, "log", (1.2, 5.0)),
    ]


def test_h_functional_basics():
    assert h_functional(3, 1.0, 1.0, 0.5) == 0.0
    assert h_functional(3, 0.0, 1.0, math.inf) == 0.0
    assert h_functional(1, 0.0, 2.0, 1.0) == pytest.approx(4.0)
    with pytest.raises(InfiniteBoundError):
        h_functional(2, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        h_functional(0, 0.0, 1.0, 1.0)


def test_h_example1_against_mpmath():
    with mpmath.workdps(30):
        t = mpmath.mpf("0.5")
        exact = float(4 * (1 - mpmath.e**t) ** 2 / (mpmath.e ** (4 * t * t) - 1))
    path = example1_path()
    h = h_functional(4, path.psi0, path.psi(0.5), path.divergence(0.5))
    assert h == pytest.approx(exact, rel=1e-13)
    assert exact == pytest.approx(0.97967, abs=1e-5)
    assert float(example1_h(4, 0.5)) == pytest.approx(exact, rel=1e-13)


@pytest.mark.parametrize("theta", [0.6, 0.9, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("n", [1, 4, 15])
def test_h_example2_matches_closed_form(theta, n):
    path = example2_path()
    h = h_functional(n, path.psi0, path.psi(theta), path.divergence(theta))
    assert h == pytest.approx(float(example2_h(n, theta)), rel=1e-12)


def test_h_example2_extends_to_one():
    # with the factor n the closed form tends to 1 at theta = 1 for every n
    for n in (1, 4, 15):
        assert float(example2_h(n, 1 + 1e-6)) == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("path, expected", [
    (gaussian_mean_path(), 1.0),
    (exponential_rate_path(1.0), 1.0),
    (exponential_rate_path(2.0, theta_range=(1.0, 3.0)), 0.25),
    (ParametricPath(psi=lambda t: t, theta0=0.0, theta_range=(-1.0, 1.0),
                    measure_at=lambda t: Gaussian(2 * t, 1.0), name="scaled"), 4.0),
])
def test_fisher_information(path, expected):
    assert fisher_information(path) == pytest.approx(expected, rel=1e-7)


def test_cramer_rao_examples():
    assert cramer_rao_bound(example1_path()) == pytest.approx(1.0, abs=1e-7)
    assert cramer_rao_bound(example2_path()) == pytest.approx(1.0, abs=1e-7)
    assert cramer_rao_bound(gaussian_mean_path(1.0, 1.0, "square", (0.0, 3.0))) == \
        pytest.approx(4.0, rel=1e-7)


def test_constant_psi_gives_zero():
    path = gaussian_mean_path(0.0, 1.0, lambda t: 3.0)
    assert cramer_rao_bound(path) == 0.0
    assert optimize_bound(path, 3).B_psi_n == 0.0


def test_flat_path_is_degenerate():
    g = Gaussian(0, 1)
    path = ParametricPath(psi=lambda t: 0.0, theta0=0.0, theta_range=(-1, 1),
                          measure_at=lambda t: g)
    with pytest.raises(DegenerateModelError):
        cramer_rao_bound(path)


@pytest.mark.parametrize("n", [1, 2, 7, 30])
def test_continuity_extension_equals_cramer_rao(n):
    assert continuity_extension(example1_path(), n) == pytest.approx(1.0, abs=1e-6)
    assert continuity_extension(example2_path(), n) == pytest.approx(1.0, abs=1e-6)


def test_continuity_extension_one_sided():
    path = gaussian_mean_path(0.0, 1.0, "exp", (0.0, 2.0))
    assert continuity_extension(path, 3) == pytest.approx(1.0, abs=1e-5)


def test_non_differentiable_path():
    # d grows like theta**4, so H blows up like theta**-2 at theta0
    path = ParametricPath(psi=lambda t: t, theta0=0.0, theta_range=(-1.0, 1.0),
                          base=Gaussian(0, 1), divergence_at=lambda t: t**4, name="kinked")
    with pytest.raises(NonDifferentiablePathError):
        continuity_extension(path, 2)


def test_discontinuous_parameter():
    g = Gaussian(0, 1)
    path = ParametricPath(psi=lambda t: t, theta0=0.0, theta_range=(-1, 1),
                          measure_at=lambda t: g, name="unidentified")
    with pytest.raises(DiscontinuousParameterError):
        optimize_bound(path, 2, grid_size=64)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 10, 20])
def test_optimize_example1_closed_form(n):
    report = optimize_bound(example1_path(), n)
    assert report.B_psi_n == pytest.approx(n * math.expm1(1 / n), rel=1e-6)
    assert report.theta_star == pytest.approx(1 / n, abs=1e-4)
    assert report.cramer_rao == pytest.approx(1.0, abs=1e-5)
    assert report.continuity_extension_value == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("n", [4, 8, 15])
def test_optimize_example2_beats_cramer_rao(n):
    report = optimize_bound(example2_path(), n)
    grid = np.linspace(0.5, 3.0, 20001)[1:]
    dense = float(np.max(example2_h(n, grid[np.abs(grid - 1) > 1e-6])))
    assert report.B_psi_n >= dense - 1e-9
    assert report.B_psi_n == pytest.approx(dense, rel=1e-6)
    assert report.B_psi_n >= 1.01


def test_optimizer_reports_limit_when_supremum_at_truth():
    # for a Gaussian mean the sample mean attains the bound: H < 1 off theta0
    report = optimize_bound(gaussian_mean_path(0.0, 1.0, "identity"), 5)
    assert report.theta_star == LIMIT_AT_THETA0
    assert report.B_psi_n == pytest.approx(1.0, abs=1e-6)


def test_grid_size_floor():
    with pytest.raises(ValueError):
        optimize_bound(example1_path(), 2, grid_size=32)


@pytest.mark.parametrize("path", smooth_paths(), ids=lambda p: p.name)
def test_dominance(path):
    cr = cramer_rao_bound(path)
    for n in (1, 3, 10):
        assert optimize_bound(path, n, grid_size=128).B_psi_n >= cr - 1e-6


@pytest.mark.parametrize("path", smooth_paths(), ids=lambda p: p.name)
def test_sweep_is_non_increasing(path):
    values = [b for _, b in asymptotic_sweep(path, 25, grid_size=128)]
    assert all(b2 <= b1 + 1e-9 for b1, b2 in zip(values, values[1:]))


def test_sweep_approaches_cramer_rao():
    with mpmath.workdps(40):
        exact = float(100 * mpmath.expm1(mpmath.mpf(1) / 100))
    assert abs(exact - 1.0) <= 0.0051
    sweep = dict(asymptotic_sweep(example1_path(), 100, n_values=[100]))
    assert sweep[100] == pytest.approx(exact, rel=1e-6)
    # Example 2 converges more slowly but still from above
    tail = [b for _, b in asymptotic_sweep(example2_path(), 200, n_values=[50, 100, 200])]
    assert 1.0 < tail[2] < tail[1] < tail[0]


def test_uniform_vanishing_far_from_truth():
    path = example2_path()
    far = [t for t in np.linspace(0.51, 3.0, 250) if path.divergence(t) > 0.5]
    assert far
    sup = [max(h_functional(n, path.psi0, path.psi(t), path.divergence(t)) for t in far)
           for n in (10, 40, 160)]
    assert sup[0] > sup[1] > sup[2]
    assert sup[2] < 1e-20


def test_h_at_two_vanishes():
    # H_n at theta = 2 is n / ((4/3)**n - 1); below 1e-6 from n = 63 on
    path = example2_path()
    d = path.divergence(2.0)
    values = {n: h_functional(n, path.psi0, 2.0, d) for n in range(1, 121)}
    for n, h in values.items():
        assert h == pytest.approx(n / math.expm1(n * math.log(4 / 3)), rel=1e-9)
    assert values[62] > 1e-6
    assert all(values[n] < 1e-6 for n in range(63, 121))


def test_curve_flags():
    path = example2_path((0.3, 3.0))
    rows = bound_curve(path, [4], [0.4, 0.5, 1.0, 2.0])
    flags = [r.flag for r in rows]
    assert flags == [FLAG_INFINITE_D, FLAG_INFINITE_D, FLAG_CONTINUITY, FLAG_OK]
    assert rows[0].H == 0.0
    assert rows[2].H == pytest.approx(1.0, abs=1e-6)
    assert rows[3].H == pytest.approx(float(example2_h(4, 2.0)), rel=1e-12)


def test_curve_infinite_bound_flag():
    g = Gaussian(0, 1)
    path = ParametricPath(psi=lambda t: t, theta0=0.0, theta_range=(-1, 1),
                          base=g, divergence_at=lambda t: 0.0 if t > 0.5 else t * t)
    rows = bound_curve(path, [2], [0.25, 0.75])
    assert rows[0].flag == FLAG_OK
    assert rows[1].flag == FLAG_INFINITE_BOUND and math.isinf(rows[1].H)


def test_curve_rejects_points_outside_range():
    with pytest.raises(ValueError):
        bound_curve(example2_path(), [4], [4.0])


def test_threads_do_not_change_results():
    a = optimize_bound(example2_path(), 6, threads=1).to_dict()
    b = optimize_bound(example2_path(), 6, threads=4).to_dict()
    assert a == b


def test_report_serialises_infinite_bound():
    path = ParametricPath(psi=lambda t: t, theta0=1.0, theta_range=(0.5, 3.0),
                          measure_at=Exponential, name="rate")
    d = optimize_bound(path, 1).to_dict(include_curve=False)
    assert "curve" not in d
    assert d["B_psi_n"] > 1


def test_golden_section():
    x, fx = golden_section_max(lambda t: -(t - 0.3) ** 2, 0.0, 1.0)
    assert x == pytest.approx(0.3, abs=1e-7)
    assert fx <= 0


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(-1, 3).filter(lambda t: abs(t) > 1e-3), n=st.integers(1, 30))
def test_h_is_pointwise_decreasing_in_n(theta, n):
    h1 = float(example1_h(n, theta))
    h2 = float(example1_h(n + 1, theta))
    assert h2 <= h1 * (1 + 1e-12)
