"""Calibrate the mollified plateau profiles against the constant cycle.

The search report of spectral_search.py is exact for coefficients that
are constant over a cycle, but the construction needs smooth compactly
supported fields, so the constants are replaced by plateau profiles
with ramps of width eps: the driving pair (p, q) rises from zero,
holds (q*/2, q*), and falls back.  Ramps cost amplification (the
plateau is shorter), so calibration measures the profiled cycle map
directly with the time-ordered exponential and accepts eps only if
log|rho| still clears the threshold with margin; the gluing seed (y, z)
is then re-derived from the profiled propagator itself.

Run:  python3 demos/profiled_cycle.py
"""

import math

import numpy as np

from dyadic import (
    Params,
    calibrate_profiles,
    coefficient_matrix,
    find_q,
    make_profiles,
    matrix_A,
)


def main():
    p = Params(lam=2.0, beta=2.5, n_shells=10)
    report = find_q(p)
    q0 = report.q

    print("=" * 72)
    print("1. the plateau profiles")
    print("=" * 72)
    eps_show = 0.05
    pq, qq = make_profiles(q0, eps_show)
    tau = np.array([0.0, eps_show / 2, eps_show, 0.5, 1.0 - eps_show, 1.0])
    print(f"p-profile (plateau q*/2 = {q0 / 2:.3f}, ramps of width "
          f"eps = {eps_show}):")
    for t, v in zip(tau, pq(tau)):
        print(f"  p({t:4.3f}) = {v:12.6f}")
    print(f"q-profile plateau: q(0.5) = {qq(np.array([0.5]))[0]:.6f} = q*")
    print(f"L1 distance of p to its plateau: "
          f"{pq.l1_distance_to_plateau():.6f}  (= eps * q*/2 = "
          f"{eps_show * q0 / 2:.6f}; one full ramp each side, half wasted)")
    print()

    print("=" * 72)
    print("2. on the plateau the cycle matrix is exactly the search matrix")
    print("=" * 72)
    gamma = q0 * report.basis.kappa
    mid = coefficient_matrix(q0 / 2.0, q0, p, gamma_rate=gamma)
    target = q0 * matrix_A(q0, p) - gamma * np.eye(3)
    print(f"gauge rate gamma = q* kappa = {gamma:.6f}")
    print(f"max|M(q*/2, q*) - (q* A(q*) - gamma I)| = "
          f"{float(np.max(np.abs(mid - target))):.3e}")
    print()

    print("=" * 72)
    print("3. calibration: accept eps only if the margin survives")
    print("=" * 72)
    cal = calibrate_profiles(report, p)
    print(f"attempts: {len(cal.attempts)}")
    for att in cal.attempts:
        verdict = "accepted" if att["passed"] else att.get("failed", "?")
        print(f"  eps = {att['eps']:.4f}  log|rho| = "
              f"{att.get('log_abs_rho', float('nan')):.4f}  -> {verdict}")
    print()
    print(f"accepted eps = {cal.eps}, texp tolerance {cal.texp_tol:g}")
    print(f"gamma   (full phase rate)          = {cal.gamma:.6f}")
    print(f"gamma_c (constant cross-check gauge = gamma (1 - 2 eps)) = "
          f"{cal.gamma_c:.6f}")
    print(f"measured ||Bhat_profiled - Bhat_const|| = "
          f"{cal.diff_measured:.3e}")
    print(f"  (log {math.log(cal.diff_measured):.1f}, under the a-priori "
          f"perturbation bound of log {cal.apriori_log_bound:.1f};")
    print(f"   the gate is the retained amplification below, not this "
          f"raw gap)")
    print()

    print("=" * 72)
    print("4. the profiled cycle pays for its ramps but keeps the margin")
    print("=" * 72)
    print(f"log|rho| constant cycle = {report.log_abs_rho:.6f}")
    print(f"log|rho| profiled cycle = {cal.log_abs_rho:.6f}")
    print(f"ramp cost               = "
          f"{report.log_abs_rho - cal.log_abs_rho:.4f}  "
          f"(about eps * gamma = {cal.eps * cal.gamma:.4f})")
    print(f"threshold log R(1 + margin) = {cal.threshold_log:.6f} "
          f"(margin {cal.margin}) -> cleared by "
          f"e^{cal.log_abs_rho - cal.threshold_log:.0f}")
    print()
    print(f"seed (y, z) profiled = ({cal.y:.9f}, {cal.z:.9f})")
    print(f"seed (y, z) constant = ({report.y:.9f}, {report.z:.9f})")
    drift = math.hypot(cal.y - report.y, cal.z - report.z)
    print(f"seed drift |delta|   = {drift:.3e}  (the construction uses "
          f"the profiled seed)")
    sep = math.log(abs(cal.rho_hat / cal.rho2_hat))
    print(f"eigenvalue separation log|rho_hat / rho2_hat| = {sep:.1f}, "
          f"so the dominant direction is unambiguous")


if __name__ == "__main__":
    main()
