"""Acceptance gate for the package.

Each test exercises one published capability end to end at its stated
tolerance and prints a single verdict line (visible even under pytest's
capture, so a plain ``pytest -v`` run doubles as a checklist).  Timed
criteria measure a fresh computation, never a cached fixture.
"""

import json
import math
import os
import time

import numpy as np
import pytest
from scipy.linalg import expm

from dyadic import (
    MatrixPath,
    Params,
    SolveConfig,
    certify_nonuniqueness,
    char_poly_A0,
    constant_forcing,
    constant_path,
    eig_A0,
    galerkin_solve,
    nonlinear_energy_flux,
    op_norm,
    texp,
    texp_continuity_bound,
    uniqueness_experiment,
    vector_forcing,
)
from dyadic.cli import main as cli_main

RNG_SEED = 20240811


def _verdict(capsys, num, label, ok, detail=""):
    mark = "PASS" if ok else "FAIL"
    line = f"acceptance {num:02d} {label:<34s} {mark}"
    if detail:
        line += f"  ({detail})"
    with capsys.disabled():
        print(line, flush=True)
    assert ok, f"criterion {num} ({label}): {detail}"


def test_01_spectral_bounds(capsys):
    """Limiting eigenstructure at lam = 2, beta = 5/2: the real root sits
    in (3/4, 1), the complex pair in the right half-strip, and the trace
    identity kappa + 2 Re w = 1 holds to 1e-12.  Runtime under 1 s."""
    start = time.perf_counter()
    basis = eig_A0(Params(lam=2.0, beta=2.5))
    elapsed = time.perf_counter() - start
    trace_gap = abs(basis.kappa + 2.0 * basis.w.real - 1.0)
    ok = (
        0.75 < basis.kappa < 1.0
        and 0.0 < basis.w.real < 0.125
        and basis.w.imag > 0.0
        and trace_gap <= 1e-12
        and elapsed < 1.0
    )
    _verdict(capsys, 1, "spectral bounds", ok,
             f"kappa0={basis.kappa:.6f}, Re w0={basis.w.real:.6f}, "
             f"trace gap={trace_gap:.1e}, {elapsed:.3f} s")


def test_02_char_poly_at_one(capsys):
    """chi(1) = 1/2 to 1e-15 across a (lam, beta) grid, which is what
    keeps the bisection bracket for kappa0 from ever degenerating."""
    worst = 0.0
    for lam in (1.2, 1.5, 2.0, 3.0, 4.0):
        for beta in (1.0, 1.5, 2.0, 2.5, 3.0, 4.0):
            p = Params(lam=lam, beta=beta)
            worst = max(worst, abs(float(char_poly_A0(1.0, p)) - 0.5))
    ok = worst <= 1e-15
    _verdict(capsys, 2, "chi(1) = 1/2", ok,
             f"worst |chi(1) - 1/2| = {worst:.2e} over 30 grid points")


def test_03_texp_oracle_equivalence(capsys):
    """Time-ordered exponential against independent oracles: constant
    paths must match scipy's expm to 1e-10, and on 100 randomized 3x3
    paths the cocycle and Liouville-determinant identities must hold to
    ten times the requested tolerance.  Runtime under 10 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(RNG_SEED)

    worst_const = 0.0
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        a, b = sorted(rng.uniform(-1.0, 1.0, size=2))
        if b - a < 0.1:
            b = a + 0.1
        got = texp(constant_path(A, a, b), tol=1e-12)
        worst_const = max(worst_const, op_norm(got - expm((b - a) * A)))

    tol = 1e-8
    worst_co = worst_li = 0.0
    for _ in range(100):
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 3))

        def mk(ts, A=A, B=B):
            ts = np.asarray(ts, dtype=float)
            return A[None] + np.sin(2 * np.pi * ts)[:, None, None] * B[None]

        full = texp(MatrixPath(0.0, 1.0, lambda t: mk([t])[0], mk),
                    tol_rel=tol)
        s = float(rng.uniform(0.3, 0.7))
        left = texp(MatrixPath(0.0, s, lambda t: mk([t])[0], mk),
                    tol_rel=tol)
        right = texp(MatrixPath(s, 1.0, lambda t: mk([t])[0], mk),
                     tol_rel=tol)
        worst_co = max(worst_co,
                       op_norm(right @ left - full) / op_norm(full))
        # the wobble integrates to zero over a full period, so the
        # determinant has the closed form exp(tr A)
        tr = float(np.trace(A))
        worst_li = max(worst_li,
                       abs(np.linalg.det(full) - math.exp(tr))
                       / math.exp(tr))

    elapsed = time.perf_counter() - start
    ok = (worst_const <= 1e-10 and worst_co <= 10.0 * tol
          and worst_li <= 10.0 * tol and elapsed < 10.0)
    _verdict(capsys, 3, "texp oracle equivalence", ok,
             f"const vs expm {worst_const:.1e}, cocycle {worst_co:.1e}, "
             f"Liouville {worst_li:.1e} vs 10*tol={10 * tol:.0e}, "
             f"{elapsed:.2f} s")


def test_04_continuity_bound(capsys):
    """The perturbation bound ||B1 - B2|| <= texp_continuity_bound must
    hold on 100 randomized pairs of paths with zero violations."""
    rng = np.random.default_rng(RNG_SEED)
    violations = 0
    worst_ratio = 0.0
    for _ in range(100):
        A = rng.normal(size=(3, 3)) * 0.7
        B = A + rng.normal(size=(3, 3)) * 0.3
        pa = constant_path(A, 0.0, 1.0)
        pb = constant_path(B, 0.0, 1.0)
        d = op_norm(texp(pa, tol_rel=1e-10) - texp(pb, tol_rel=1e-10))
        bound = texp_continuity_bound(pa, pb)
        if d > bound:
            violations += 1
        if bound > 0.0:
            worst_ratio = max(worst_ratio, d / bound)
    ok = violations == 0
    _verdict(capsys, 4, "texp continuity bound", ok,
             f"0 of 100 pairs violate; tightest margin "
             f"{worst_ratio:.3f} of the bound" if ok else
             f"{violations} of 100 pairs violate the bound")


def test_05_gluing_defects(capsys, fields):
    """After calibration at lam = 2, beta = 5/2, R = lam**beta, the
    endpoint defects |h1(1) - rho y| and |h2(1) - rho z| must not exceed
    1e-8 (|rho y| + |rho z|), measured in the scaled per-cycle frame."""
    p = fields.params
    assert (p.lam, p.beta) == (2.0, 2.5)
    assert p.rho_threshold == pytest.approx(2.0 ** 2.5, rel=1e-15)
    d = fields.gluing_defects()
    budget = 1e-8 * (abs(d["target_h1"]) + abs(d["target_h2"]))
    ok = d["defect_h1"] <= budget and d["defect_h2"] <= budget
    _verdict(capsys, 5, "gluing conditions", ok,
             f"defects {d['defect_h1']:.2e}, {d['defect_h2']:.2e} "
             f"vs budget {budget:.2e} (rel {d['rel']:.2e})")


def test_06_end_to_end_certificate(capsys):
    """Fresh full-pipeline certificate at lam = 2, beta = 5/2, N = 10:
    residuals of both solutions and both energy defects within 1e-6,
    positive distinctness, and forcing-partial tail ratios within 10%
    of lam**(4 - 2 beta) = 1/2 over shells 5..10.  Runtime under 60 s."""
    start = time.perf_counter()
    cert, _ = certify_nonuniqueness(Params(lam=2.0, beta=2.5, n_shells=10))
    elapsed = time.perf_counter() - start

    res = max(cert.residual_plus.overall, cert.residual_minus.overall)
    energy = max(cert.energy_plus["defect_rel"],
                 cert.energy_minus["defect_rel"])
    window = cert.tolerances["ratio_window"]
    tail = np.asarray(cert.forcing["ratios"][window[0] - 1:window[1] - 1],
                      dtype=float)
    tail_err = float(np.abs(tail / 0.5 - 1.0).max())
    ok = (
        cert.passed
        and res <= 1e-6
        and energy <= 1e-6
        and cert.distinctness["value"] > 0.0
        and window == [5, 10]
        and tail_err <= 0.10
        and elapsed < 60.0
    )
    _verdict(capsys, 6, "end-to-end certificate", ok,
             f"residual {res:.1e}, energy defect {energy:.1e}, "
             f"distinctness {cert.distinctness['value']:.4g}, tail ratio "
             f"err {tail_err:.1%} on shells {window[0]}..{window[1]}, "
             f"{elapsed:.1f} s")


def test_07_flux_orthogonality(capsys):
    """The quadratic terms do no net work: the telescoping energy flux
    vanishes to 1e-12 relative to its gross magnitude on 1000 random
    states across truncations N = 1..16."""
    rng = np.random.default_rng(RNG_SEED)
    worst = 0.0
    for _ in range(1000):
        N = int(rng.integers(1, 17))
        p = Params(lam=2.0, beta=2.5, n_shells=N)
        u = rng.normal(size=N) * 10.0 ** rng.uniform(-2.0, 2.0)
        flux = nonlinear_energy_flux(u, p)
        below = np.concatenate(([0.0], u[:-1]))
        above = np.concatenate((u[1:], [0.0]))
        gross = float(np.sum(np.abs(u) * (p.flux_in * below**2
                                          + p.flux_out * np.abs(u * above))))
        if gross > 0.0:
            worst = max(worst, abs(flux) / gross)
        else:
            assert flux == 0.0
    ok = worst <= 1e-12
    _verdict(capsys, 7, "flux orthogonality", ok,
             f"worst |flux| / gross = {worst:.2e} over 1000 states")


def test_08_positivity_conservation(capsys):
    """Nonnegative data and forcing keep every shell nonnegative: 100
    randomized runs across beta in {1, 2, 5/2} must never dip below
    -1e-9 at any sample."""
    rng = np.random.default_rng(0)
    min_u = np.inf
    for i in range(100):
        beta = (1.0, 2.0, 2.5)[i % 3]
        N = int(rng.integers(2, 7))
        a = rng.random(N)
        fv = rng.random(N)
        cfg = SolveConfig(t_end=0.1, n_shells=N, rtol=1e-8, atol=1e-12,
                          initial=a, forcing=vector_forcing(fv))
        traj = galerkin_solve(cfg, Params(lam=2.0, beta=beta, n_shells=N))
        assert not traj.diverged
        min_u = min(min_u, float(traj.u.min()))
    ok = min_u >= -1e-9
    _verdict(capsys, 8, "positivity conservation", ok,
             f"min shell amplitude {min_u:.3e} over 100 runs")


def test_09_uniqueness_regime(capsys):
    """At beta = 2 the solution must be insensitive to both truncation
    (N = 8 vs 12) and +-1e-6 data perturbation: endpoint l2 distances
    within 1e-5.  Runtime under 30 s."""
    start = time.perf_counter()
    report = uniqueness_experiment(Params(lam=2.0, beta=2.0, n_shells=12))
    elapsed = time.perf_counter() - start
    worst = max(report.endpoint_distances.values())
    ok = worst <= 1e-5 and report.contracted and elapsed < 30.0
    pieces = ", ".join(f"{k} {v:.2e}"
                       for k, v in sorted(report.endpoint_distances.items()))
    _verdict(capsys, 9, "uniqueness-regime consistency", ok,
             f"{pieces}, {elapsed:.1f} s")


def test_10_closed_form_solve(capsys):
    """One shell, constant forcing c = 1, lam = 2: the solver must track
    u1(t) = (1 - exp(-4 t)) / 4 to 1e-9 across [0, 1]."""
    cfg = SolveConfig(t_end=1.0, n_shells=1, rtol=1e-10, atol=1e-14,
                      forcing=constant_forcing(1.0),
                      t_eval=np.linspace(0.0, 1.0, 201))
    traj = galerkin_solve(cfg, Params(lam=2.0, beta=2.5, n_shells=1))
    exact = 0.25 * (1.0 - np.exp(-4.0 * traj.t))
    err = float(np.max(np.abs(traj.u[:, 0] - exact)))
    ok = err <= 1e-9 and not traj.diverged
    _verdict(capsys, 10, "closed-form solve", ok,
             f"max |u1 - closed form| = {err:.2e} on 201 samples")


def test_11_determinism(capsys, tmp_path):
    """Two certify runs with identical configuration must byte-reproduce
    the certificate (metadata block excluded) and the trajectory CSVs."""
    out = str(tmp_path)
    argv = ["certify", "--lambda", "1.2", "--beta", "2.5", "--shells", "6",
            "--out", out]

    def snapshot():
        with open(os.path.join(out, "certificate.json")) as fh:
            obj = json.load(fh)
        obj.pop("metadata", None)
        canon = json.dumps(obj, sort_keys=True)
        with open(os.path.join(out, "u_plus.csv"), "rb") as fh:
            return canon, fh.read()

    rc1 = cli_main(argv)
    cert1, csv1 = snapshot()
    rc2 = cli_main(argv)
    cert2, csv2 = snapshot()
    ok = rc1 == 0 and rc2 == 0 and cert1 == cert2 and csv1 == csv2
    _verdict(capsys, 11, "determinism", ok,
             f"exit codes {rc1}/{rc2}, certificate "
             f"{'identical' if cert1 == cert2 else 'DIFFERS'}, CSV "
             f"{'identical' if csv1 == csv2 else 'DIFFERS'}")
