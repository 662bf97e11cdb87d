import math

import numpy as np
import pytest

from swerexi.errors import ContourError
from swerexi.rexi import (
    ContourSpec,
    RexiSetup,
    cancellation_diagnostic,
    circle_contour_coeffs,
    coeffs_for_contour,
    eval_rational,
    export_coefficients_csv,
    import_coefficients_csv,
    phi_function,
    scale_radius_with_dt,
    shifted_contour_from_points,
)

# Frozen regression bounds, measured once against dense evaluation of the
# exact exponential on the p0=10, p1=30, N=128 shifted contour:
#   i*[-25, 25]  -> 5.77e-4   (trapezoid error is geometric near the rim)
#   i*[-24, 24]  -> 1.39e-4
#   i*[-8, 8]    -> 1.94e-11
#   x = 0        -> 1.71e-11
FROZEN_ERR_25 = 1.0e-3
FROZEN_ERR_08P1 = 3.0e-4
FROZEN_ERR_CORE = 1.0e-10
FROZEN_ERR_AT_ZERO = 1.0e-10


def default_coeffs(function_id="psi0", n=128):
    return coeffs_for_contour(function_id, shifted_contour_from_points(10.0, 30.0, n))


def test_single_pole_contour_formula():
    coeffs = circle_contour_coeffs("psi0", radius=1.0, center=0.0, num_poles=1)
    # theta_1 = 2*pi: alpha = -1, beta = -e
    assert abs(coeffs.alphas[0] - (-1.0)) < 1e-15
    assert abs(coeffs.betas[0] - (-math.e)) < 1e-14


def test_single_pole_location_via_evaluation():
    coeffs = circle_contour_coeffs("psi0", 1.0, 0.0, 1)
    eps = 1e-8
    val = eval_rational(coeffs, -coeffs.alphas[0] + eps)
    assert abs(val - (-math.e / eps)) < 1e-6 * abs(-math.e / eps)
    with pytest.raises(ContourError):
        eval_rational(coeffs, -coeffs.alphas[0])


def test_shifted_contour_geometry():
    c = shifted_contour_from_points(10.0, 30.0)
    assert c.radius == 50.0
    assert c.center == -40.0 + 0.0j
    c2 = shifted_contour_from_points(10.0, 10.0)
    assert c2.radius == 10.0
    assert c2.center == 0.0 + 0.0j
    # the circle passes through p0, +i p1, -i p1
    for c_ in (c, c2):
        for pt in (c_.p0, 1j * c_.p1_imag, -1j * c_.p1_imag):
            assert abs(abs(pt - c_.center) - c_.radius) < 1e-13 * c_.radius
    with pytest.raises(ContourError):
        shifted_contour_from_points(0.0, 30.0)


def test_phi_function_values():
    assert abs(phi_function(1, 0.0) - 1.0) < 1e-15
    assert abs(phi_function(2, 0.0) - 0.5) < 1e-15
    assert abs(phi_function(1, 1.0) - (math.e - 1.0)) < 1e-14
    assert abs(phi_function(0, 1j) - np.exp(1j)) < 1e-15


def test_phi_recurrence_consistency():
    """psi_{k+1}(z) = (psi_k(z) - psi_k(0)) / z across the Taylor switch."""
    rng = np.random.default_rng(0)
    mags = np.concatenate([np.geomspace(1e-3, 10.0, 40)] * 2)
    phases = rng.uniform(0, 2 * np.pi, mags.size)
    z = mags * np.exp(1j * phases)
    for k in (0, 1):
        lhs = phi_function(k + 1, z)
        rhs = (phi_function(k, z) - phi_function(k, 0.0)) / z
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_radius_scaling_rule():
    assert scale_radius_with_dt(480.0) == 30.0
    assert scale_radius_with_dt(48.0) == 5.0  # floored
    assert scale_radius_with_dt(960.0) == 60.0
    # nondecreasing, never below the floor
    dts = np.linspace(1.0, 2000.0, 50)
    radii = [scale_radius_with_dt(dt) for dt in dts]
    assert all(r >= 5.0 for r in radii)
    assert all(b >= a for a, b in zip(radii, radii[1:]))


def test_exp_approximation_against_frozen_bounds():
    coeffs = default_coeffs()
    for lim, bound in ((25.0, FROZEN_ERR_25), (24.0, FROZEN_ERR_08P1), (8.0, FROZEN_ERR_CORE)):
        xs = np.linspace(-lim, lim, 801)
        err = max(abs(eval_rational(coeffs, 1j * x) - np.exp(1j * x)) for x in xs)
        assert err <= bound
    assert abs(eval_rational(coeffs, 0.0) - 1.0) <= FROZEN_ERR_AT_ZERO


def test_error_grows_monotonically_outside_covered_spectrum():
    coeffs = default_coeffs()
    errs = [
        max(
            abs(eval_rational(coeffs, 1j * x) - np.exp(1j * x))
            for x in np.linspace(lim - 0.5, lim, 30)
        )
        for lim in (12.0, 16.0, 20.0, 24.0, 28.0, 32.0)
    ]
    assert all(b > a for a, b in zip(errs, errs[1:]))


def test_conjugate_symmetry_of_coefficients_and_evaluation():
    coeffs = default_coeffs()
    a_tol = 1e-13 * float(np.max(np.abs(coeffs.alphas)))
    b_tol = 1e-13 * float(np.max(np.abs(coeffs.betas)))
    key = lambda t: (round(t[0].real, 9), round(t[0].imag, 9))
    pairs = sorted(zip(coeffs.alphas, coeffs.betas), key=key)
    conj_pairs = sorted(zip(np.conj(coeffs.alphas), np.conj(coeffs.betas)), key=key)
    assert all(
        abs(a - ac) < a_tol and abs(b - bc) < b_tol
        for (a, b), (ac, bc) in zip(pairs, conj_pairs)
    )
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = complex(rng.uniform(-5, 5), rng.uniform(-5, 5))
        lhs = eval_rational(coeffs, np.conj(x))
        rhs = np.conj(eval_rational(coeffs, x))
        # conditioning scale of the sum: the terms reach |beta|/dist ~ 1e2
        cond = float(np.sum(np.abs(coeffs.betas) / np.abs(x + coeffs.alphas)))
        assert abs(lhs - rhs) < 1e-13 * cond


def test_cancellation_growth_of_unshifted_circle():
    d16 = cancellation_diagnostic(1.0, 16)
    assert 1.0 - math.log(16) - 1 <= d16["log_max_abs_beta"] <= 1.0 + 1
    d20 = cancellation_diagnostic(20.0, 64)
    d40 = cancellation_diagnostic(40.0, 64)
    assert abs((d40["log_max_abs_beta"] - d20["log_max_abs_beta"]) - 20.0) <= 2.0
    # slope of log max|beta| vs R close to 1
    rs = np.array([10.0, 20.0, 30.0, 40.0])
    logs = [cancellation_diagnostic(r, 128)["log_max_abs_beta"] for r in rs]
    slope = np.polyfit(rs, logs, 1)[0]
    assert abs(slope - 1.0) <= 0.1


def test_shifted_contour_bounds_beta():
    coeffs = default_coeffs()
    assert float(np.max(np.abs(coeffs.betas))) <= math.exp(10.0 + 1.0)


def test_contour_overflow_reports_node():
    with pytest.raises(ContourError):
        circle_contour_coeffs("psi0", radius=800.0, center=0.0, num_poles=16)


def test_extended_precision_path_agrees_with_double():
    plain = circle_contour_coeffs("psi0", 20.0, 0.0, 32, extended=False)
    ext = circle_contour_coeffs("psi0", 20.0, 0.0, 32, extended=True)
    scale = np.max(np.abs(plain.betas))
    assert np.max(np.abs(plain.betas - ext.betas)) < 1e-13 * scale


def test_rexi_setup_regimes():
    fixed = RexiSetup()
    c = fixed.contour_for_dt(480.0)
    assert (c.radius, c.center, c.num_poles) == (50.0, -40.0 + 0.0j, 128)
    scaled = RexiSetup(radius_scaling=True)
    c2 = scaled.contour_for_dt(480.0)
    assert (c2.radius, c2.num_poles) == (30.0, 32)
    assert scaled.contour_for_dt(10.0).radius == 5.0


def test_csv_roundtrip(tmp_path):
    coeffs = default_coeffs("psi1", n=32)
    path = tmp_path / "coeffs.csv"
    export_coefficients_csv(path, coeffs)
    back = import_coefficients_csv(path)
    assert back.function_id == "psi1"
    assert back.contour.num_poles == 32
    assert np.array_equal(back.alphas, coeffs.alphas)
    assert np.array_equal(back.betas, coeffs.betas)
    assert abs(back.contour.radius - coeffs.contour.radius) == 0.0


def test_psi1_psi2_contour_approximations():
    # frozen: measured 6.21e-6 (psi1) and 6.00e-6 (psi2) on i[-24, 24]
    for fid, k, bound in (("psi1", 1, 2e-5), ("psi2", 2, 2e-5)):
        coeffs = default_coeffs(fid)
        xs = np.linspace(-24, 24, 401)
        err = max(abs(eval_rational(coeffs, 1j * x) - phi_function(k, 1j * x)) for x in xs)
        assert err <= bound
