"""Exponential Runge-Kutta cascade solver: exactness classes, step
control, blow-up reporting, the a-priori existence interval, and the
energy inequality audit."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dyadic import (NumericError, Params, SolveConfig, constant_forcing,
                    constructed_forcing, energy_inequality_check,
                    galerkin_solve, local_existence_interval, output_grid,
                    vector_forcing, zero_forcing)


def test_solve_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(t_end=0.0)
    with pytest.raises(ValueError):
        SolveConfig(t_end=-1.0)
    with pytest.raises(ValueError):
        SolveConfig(t_end=1.0, rtol=0.0)
    with pytest.raises(ValueError):
        SolveConfig(t_end=1.0, atol=-1e-9)


def test_forcing_helpers():
    assert zero_forcing(3, 0.7) == 0.0
    assert constant_forcing(2.5)(1, 9.0) == 2.5
    fv = vector_forcing(np.array([1.0, 4.0, 9.0]))
    assert fv(1, 0.0) == 1.0 and fv(3, 123.0) == 9.0


def test_output_grid_structure():
    p = Params(lam=2.0, beta=2.5, n_shells=4)
    ts = output_grid(p, 0.5)
    assert ts[0] == 0.0 and ts[-1] == 0.5
    assert np.all(np.diff(ts) > 0.0)
    # the dyadic switching times below t_end are all on the grid
    for k in range(5):
        tk = 1.0 / (3.0 * 4.0**k)
        if tk < 0.5:
            assert np.min(np.abs(ts - tk)) < 1e-15


def test_single_shell_constant_forcing_closed_form():
    # N = 1: udot = c - lam^2 u, so u(t) = (c/4)(1 - exp(-4t)) at lam = 2.
    # The exponential integrator is exact here; only roundoff remains.
    p = Params(lam=2.0, beta=2.5, n_shells=1)
    cfg = SolveConfig(t_end=1.0, rtol=1e-10, atol=1e-14,
                      forcing=constant_forcing(1.0))
    traj = galerkin_solve(cfg, p)
    exact = 0.25 * (1.0 - np.exp(-4.0 * traj.t))
    assert np.abs(traj.u[:, 0] - exact).max() <= 1e-12
    assert not traj.diverged
    assert traj.stats["n_rejected"] == 0
    assert traj.f is not None and np.all(traj.f == 1.0)


def test_single_shell_unforced_decay_exact():
    p = Params(lam=2.0, beta=2.5, n_shells=1)
    cfg = SolveConfig(t_end=2.0, initial=np.array([0.7]))
    traj = galerkin_solve(cfg, p)
    assert np.abs(traj.u[:, 0] - 0.7 * np.exp(-4.0 * traj.t)).max() <= 1e-12
    assert traj.f is None


def test_rest_state_stays_at_rest():
    p = Params(lam=2.0, beta=2.5, n_shells=5)
    traj = galerkin_solve(SolveConfig(t_end=0.3), p)
    assert np.all(traj.u == 0.0)


def test_t_eval_validation():
    p = Params(lam=2.0, beta=2.5, n_shells=2)
    with pytest.raises(ValueError):
        galerkin_solve(SolveConfig(t_end=1.0,
                                   t_eval=np.array([0.1, 0.5, 1.0])), p)
    with pytest.raises(ValueError):
        galerkin_solve(SolveConfig(t_end=1.0,
                                   t_eval=np.array([0.0, 0.6, 0.5, 1.0])), p)
    with pytest.raises(ValueError):
        galerkin_solve(SolveConfig(t_end=1.0,
                                   t_eval=np.array([0.0, 0.5, 0.9])), p)


def test_initial_length_validation():
    p = Params(lam=2.0, beta=2.5, n_shells=3)
    with pytest.raises(ValueError):
        galerkin_solve(SolveConfig(t_end=0.1, initial=np.ones(2)), p)


def test_blowup_reported_not_raised():
    p = Params(lam=2.0, beta=2.5, n_shells=1)
    cfg = SolveConfig(t_end=0.2, rtol=1e-8, atol=1e-6,
                      forcing=constant_forcing(1e13))
    traj = galerkin_solve(cfg, p)
    assert traj.diverged
    assert traj.blowup_time is not None and traj.blowup_time < 0.2
    # trajectory is truncated at the guard crossing but still usable
    assert len(traj.t) == len(traj.u)
    assert len(traj.t) < len(output_grid(p, 0.2))
    assert np.all(np.isfinite(traj.u))


def test_energy_inequality_on_decaying_run():
    p = Params(lam=2.0, beta=2.5, n_shells=4)
    init = np.array([1.0, 0.5, 0.25, 0.125])
    cfg = SolveConfig(t_end=0.5, rtol=1e-10, atol=1e-14, initial=init,
                      samples_per_interval=64)
    traj = galerkin_solve(cfg, p)
    chk = energy_inequality_check(traj, initial=init)
    # unforced: the balance is an identity, so the defect is pure
    # trapezoid error of the dissipation integral
    assert chk["max_defect_rel"] <= 1e-5
    assert chk["lhs_end"] <= chk["rhs_end"] * (1.0 + 1e-5)
    assert chk["rhs_end"] == pytest.approx(float(init @ init), rel=1e-15)


def test_energy_inequality_forced_run_is_strict():
    p = Params(lam=2.0, beta=2.5, n_shells=3)
    cfg = SolveConfig(t_end=0.5, rtol=1e-10, atol=1e-14,
                      forcing=vector_forcing(np.array([1.0, 0.5, 0.0])))
    traj = galerkin_solve(cfg, p)
    chk = energy_inequality_check(traj, initial=None)
    # weighted Cauchy slack: equality only at t = 0, strict once work flows
    assert chk["max_signed_defect"] <= 0.0
    assert chk["lhs_end"] < chk["rhs_end"]


def test_local_existence_interval_closed_form():
    p = Params(lam=2.0, beta=2.5, n_shells=3)
    cfg = SolveConfig(t_end=1.0, initial=np.array([1.0, 0.0, 0.0]))
    delta = local_existence_interval(cfg, p)
    # C = lam^(2N) + 3 lam^(beta(N+1)) = 64 + 3072 = 3136, R = 2
    assert delta == pytest.approx(1.0 / 18816.0, rel=1e-15)
    assert delta == pytest.approx(5.314625850340136e-05, rel=1e-12)


def test_local_existence_interval_with_forcing():
    p = Params(lam=2.0, beta=2.5, n_shells=2)
    cfg = SolveConfig(t_end=1.0, forcing=constant_forcing(1.0))
    delta = local_existence_interval(cfg, p)
    C = 2.0**4 + 3.0 * 2.0 ** (2.5 * 3.0)
    R = 2.0 * math.sqrt(2.0)  # 2 * int_0^1 ||(1,1)|| dt
    assert delta == pytest.approx(1.0 / (2.0 * C * (R + 1.0)), rel=1e-12)


def test_solver_tracks_constructed_solution(fields):
    # one short window of the supercritical cascade: start on u+ at t_1,
    # integrate shells 1..6 under the constructed forcing (time-shifted),
    # and land back on u+ despite the e^(gamma tau) ~ 10^3 amplification
    p = fields.params
    Nw = 6
    t_start = fields.grid.t(1)
    t_end = 0.01 / p.lam**2
    init = np.array([float(fields.u(n, np.array([t_start]))[0])
                     for n in range(1, Nw + 1)])
    forcing = lambda n, t: float(fields.f(n, np.array([t_start + t]))[0])
    cfg = SolveConfig(t_end=t_end, n_shells=Nw, rtol=1e-8, atol=1e-12,
                      initial=init, forcing=forcing,
                      t_eval=np.linspace(0.0, t_end, 33))
    traj = galerkin_solve(cfg, p.with_shells(Nw))
    ref = np.array([float(fields.u(n, np.array([t_start + t_end]))[0])
                    for n in range(1, Nw + 1)])
    err = float(np.linalg.norm(traj.u[-1] - ref) / np.linalg.norm(ref))
    assert not traj.diverged
    assert err <= 1e-7


def test_constructed_forcing_adapter(fields):
    fn = constructed_forcing(fields)
    t_probe = 0.5 * (fields.grid.t(2) + fields.grid.t(1))
    assert fn(2, t_probe) == pytest.approx(
        float(fields.f(2, np.array([t_probe]))[0]), rel=1e-15)


def test_step_size_underflow_raises():
    p = Params(lam=2.0, beta=2.5, n_shells=1)
    # an impossible tolerance at a guard-free amplitude forces the
    # controller below the step floor
    cfg = SolveConfig(t_end=1.0, rtol=1e-13, atol=1e-300, h0=1e-13,
                      forcing=lambda n, t: math.sin(1.0 / (t + 1e-15)) * 1e6,
                      blowup_guard=np.inf)
    with pytest.raises(NumericError):
        galerkin_solve(cfg, p)
