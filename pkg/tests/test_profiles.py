"""Mollified coefficient profiles, the profiled coefficient matrix, and
the ramp-width calibration of the cycle map."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad

from dyadic import (CalibrationError, ConstantProfile, SmoothProfile,
                    calibrate_profiles, coefficient_matrix,
                    coefficient_matrix_path, make_profiles, matrix_A,
                    smoothstep)
from dyadic.profiles import smoothstep_deriv
from dyadic.spectral import block_eigendata

# accepted calibration at lam = 2, beta = 5/2, R = lam**beta (frozen from
# a pinned run of this deterministic pipeline)
CAL_GAMMA = 801.3476556701462
CAL_GAMMA_C = 721.2128901031316
CAL_RHO_HAT = -2191869033628438.5
CAL_RHO2_HAT = -0.03210444743643054
CAL_LOG_RHO = 756.5364211179108
CAL_Y = 0.999865455924251
CAL_Z = 0.016403354821174512
CAL_DIFF = 6.394630175618271e+34
CAL_APRIORI_LOG = 9192.34273413892


# ---------------------------------------------------------------------------
# smoothstep and profiles
# ---------------------------------------------------------------------------


def test_smoothstep_endpoints_and_midpoint():
    xs = np.array([-2.0, 0.0, 0.5, 1.0, 3.0])
    assert_allclose(smoothstep(xs), [0.0, 0.0, 0.5, 1.0, 1.0], rtol=0, atol=0)


@given(st.floats(min_value=-1.0, max_value=2.0))
def test_smoothstep_partition_identity(x):
    s = float(smoothstep(np.array([x]))[0])
    t = float(smoothstep(np.array([1.0 - x]))[0])
    assert 0.0 <= s <= 1.0
    assert s + t == pytest.approx(1.0, abs=1e-15)


def test_smoothstep_monotone():
    xs = np.linspace(-0.1, 1.1, 400)
    vals = smoothstep(xs)
    assert np.all(np.diff(vals) >= 0.0)


def test_smoothstep_deriv_matches_finite_difference():
    h = 1e-6
    for x in (0.2, 0.35, 0.5, 0.65, 0.8):
        fd = (smoothstep(np.array([x + h])) - smoothstep(np.array([x - h])))[0] / (2 * h)
        an = float(smoothstep_deriv(np.array([x]))[0])
        assert an == pytest.approx(fd, rel=1e-5)
    assert_allclose(smoothstep_deriv(np.array([-0.5, 0.0, 1.0, 1.5])), 0.0)


def test_smooth_profile_shape():
    prof = SmoothProfile(plateau=3.0, eps=0.1)
    tau = np.array([0.0, 0.05, 0.1, 0.3, 0.5, 0.9, 0.95, 1.0])
    vals = prof(tau)
    assert vals[0] == 0.0 and vals[-1] == 0.0
    # exactly the plateau on [eps, 1 - eps]
    assert_allclose(vals[2:6], 3.0, rtol=0, atol=0)
    assert 0.0 < vals[1] < 3.0 and 0.0 < vals[6] < 3.0
    # mirror symmetry of the two ramps
    assert prof(np.array([0.03]))[0] == pytest.approx(
        prof(np.array([0.97]))[0], rel=1e-14)


def test_smooth_profile_eps_validation():
    with pytest.raises(ValueError):
        SmoothProfile(plateau=1.0, eps=0.0)
    with pytest.raises(ValueError):
        SmoothProfile(plateau=1.0, eps=0.6)
    SmoothProfile(plateau=1.0, eps=0.5)  # boundary value is allowed


def test_smooth_profile_deriv_finite_difference():
    prof = SmoothProfile(plateau=2.0, eps=0.2)
    h = 1e-6
    for tau in (0.05, 0.13, 0.5, 0.87, 0.95):
        fd = (prof(np.array([tau + h])) - prof(np.array([tau - h])))[0] / (2 * h)
        assert float(prof.deriv(np.array([tau]))[0]) == pytest.approx(
            fd, rel=1e-5, abs=1e-9)


def test_smooth_profile_l1_distance_exact():
    prof = SmoothProfile(plateau=3.0, eps=0.1)
    assert prof.l1_distance_to_plateau() == pytest.approx(0.3, rel=1e-15)
    # the closed form eps * |plateau| agrees with direct quadrature
    val, _ = quad(lambda t: abs(float(prof(np.array([t]))[0]) - 3.0),
                  0.0, 1.0, points=[0.1, 0.9], limit=200)
    assert val == pytest.approx(0.3, rel=1e-9)


def test_constant_profile():
    prof = ConstantProfile(plateau=4.0)
    tau = np.linspace(0.0, 1.0, 7)
    assert_allclose(prof(tau), 4.0)
    assert_allclose(prof.deriv(tau), 0.0)
    assert prof.l1_distance_to_plateau() == 0.0
    assert prof.to_dict() == {"plateau": 4.0, "eps": 0.0}


def test_make_profiles():
    p, q = make_profiles(10.0, 0.05)
    assert p.plateau == 5.0 and q.plateau == 10.0
    assert p.eps == q.eps == 0.05


# ---------------------------------------------------------------------------
# coefficient matrix
# ---------------------------------------------------------------------------


def test_coefficient_matrix_entries(params):
    lam, beta = params.lam, params.beta
    M = coefficient_matrix(1.5, 4.0, params, gamma_rate=0.25)
    lb = lam**beta
    expect = np.array([
        [-lam**-2 + 4.0 - 0.25, -1.5, 0.0],
        [3.0, -1.25, 4.0 * lb],
        [0.0, -8.0 * lb, -lam**2 - 0.25],
    ])
    assert_allclose(M, expect, rtol=0, atol=0)


def test_coefficient_matrix_plateau_identity(params):
    # with p = q0/2 the profiled matrix is q0 A(q0) - gamma I
    q0, gam = 5.0, 2.0
    M = coefficient_matrix(q0 / 2.0, q0, params, gamma_rate=gam)
    assert_allclose(M, q0 * matrix_A(q0, params) - gam * np.eye(3),
                    rtol=1e-14, atol=1e-13)


def test_coefficient_matrix_batched(params):
    pv = np.array([0.0, 1.0, 2.0, 3.0])
    qv = np.array([0.0, 2.0, 4.0, 6.0])
    M = coefficient_matrix(pv, qv, params)
    assert M.shape == (4, 3, 3)
    for i in range(4):
        assert_allclose(M[i], coefficient_matrix(pv[i], qv[i], params))


def test_coefficient_matrix_path_consistency(params):
    p_prof, q_prof = make_profiles(6.0, 0.1)
    path = coefficient_matrix_path(p_prof, q_prof, params, gamma_rate=1.0,
                                   interval=(0.2, 0.8))
    assert path.interval == (0.2, 0.8)
    ts = np.linspace(0.2, 0.8, 5)
    batch = path.sample(ts)
    singles = np.stack([path.matrix(t) for t in ts])
    assert_allclose(batch, singles, rtol=1e-15)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


def test_calibration_accepted_first_attempt(calibration):
    cal = calibration
    assert cal.eps == 0.05
    assert len(cal.attempts) == 1
    assert cal.attempts[0].get("passed") is True
    assert cal.margin == 0.5
    assert cal.texp_tol == 1e-7


def test_calibration_frozen_values(calibration):
    cal = calibration
    assert cal.gamma == pytest.approx(CAL_GAMMA, rel=1e-12)
    assert cal.gamma_c == pytest.approx(CAL_GAMMA_C, rel=1e-12)
    assert cal.rho_hat == pytest.approx(CAL_RHO_HAT, rel=1e-12)
    assert cal.rho2_hat == pytest.approx(CAL_RHO2_HAT, rel=1e-9)
    assert cal.log_abs_rho == pytest.approx(CAL_LOG_RHO, rel=1e-12)
    assert cal.rho_sign == -1.0
    assert cal.y == pytest.approx(CAL_Y, rel=1e-12)
    assert cal.z == pytest.approx(CAL_Z, rel=1e-9)
    assert cal.diff_measured == pytest.approx(CAL_DIFF, rel=1e-9)
    assert cal.apriori_log_bound == pytest.approx(CAL_APRIORI_LOG, rel=1e-9)


def test_calibration_internal_identities(calibration, report):
    cal = calibration
    # constant-gauge phase covers exactly the plateau
    assert cal.gamma == pytest.approx(report.log_k, rel=1e-14)
    assert cal.gamma_c == pytest.approx(cal.gamma * 0.9, rel=1e-14)
    # unscaled amplification reassembles from the gauge and the scaled root
    assert cal.log_abs_rho == pytest.approx(
        cal.gamma_c + math.log(abs(cal.rho_hat)), rel=1e-14)
    # it clears the threshold with the requested margin
    assert cal.threshold_log == pytest.approx(
        math.log(report.R) + math.log1p(cal.margin), rel=1e-14)
    assert cal.log_abs_rho > cal.threshold_log
    # measured profiled-vs-constant difference honors the a-priori bound
    assert math.log(cal.diff_measured) <= cal.apriori_log_bound
    # (y, z) is the unit dominant eigenvector of the block
    assert cal.y**2 + cal.z**2 == pytest.approx(1.0, rel=1e-13)
    disc, big, _ = block_eigendata(cal.btilde)
    assert disc > 0.0
    assert big == pytest.approx(cal.rho_hat, rel=1e-13)
    vec = np.array([cal.y, cal.z])
    assert_allclose(cal.btilde @ vec, cal.rho_hat * vec,
                    rtol=1e-10, atol=1e-10 * abs(cal.rho_hat))


def test_calibration_to_dict_round(calibration):
    d = calibration.to_dict()
    assert d["eps"] == 0.05
    assert d["p_profile"] == {"plateau": calibration.p_profile.plateau,
                              "eps": 0.05}
    assert d["attempts"][0]["passed"] is True


def test_calibration_unattainable_margin(report, params):
    with pytest.raises(CalibrationError) as exc:
        calibrate_profiles(report, params, margin=math.inf,
                           eps0=0.05, eps_min=0.04)
    attempts = exc.value.attempts
    assert len(attempts) == 1
    assert attempts[0]["failed"] == "amplification below margin threshold"
    assert attempts[0]["eps"] == 0.05


def test_calibration_requires_usable_report(report, params):
    broken = dataclasses.replace(report, log_k=math.inf)
    with pytest.raises(ValueError):
        calibrate_profiles(broken, params)
