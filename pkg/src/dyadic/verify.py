"""Certificate assembly: residuals, gluing, energy, distinctness.

A non-uniqueness certificate is a bundle of measured numbers with
tolerances: both split solutions u+ and u- are substituted into the
cascade equations shell by shell (normalized residual supremum), the
difference field's continuity at the switching times is checked in the
scaled cycle frame (gluing), the truncated energy identity with its
boundary-flux term is integrated along both solutions (composite Simpson
on the shared per-interval grid), the forcing partial sums are tabulated
with their geometric tail ratio, and the distinctness sup_t sum (u+ - u-)^2
is measured.  Everything is a plain number in the certificate; nothing
passes by construction.

The uniqueness-regime experiment for beta <= 2 lives here too: resolution
and data-perturbation sweeps whose endpoint distances are expected to
contract rather than split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from .core import NumericError, Params
from .construction import (ForcingPartials, SplitFields, build_split_fields,
                           forcing_norm_partials, interval_s_grid,
                           interval_times)
from .profiles import CalibrationError
from .solver import SolveConfig, galerkin_solve
from .spectral import SearchError


class PipelineError(RuntimeError):
    """Wraps a failure of a named certificate stage; .stage identifies the
    stage, .original carries the underlying exception."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"certificate stage '{stage}' failed: {original}")
        self.stage = stage
        self.original = original


def _json_safe(obj):
    """Recursively convert to JSON-encodable types; non-finite floats
    become None (JSON has no inf/nan)."""
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


@dataclass
class ResidualReport:
    sign: int
    shells: np.ndarray
    per_shell: np.ndarray        # normalized residual sup per shell
    overall: float
    forcing_agreement: float     # sup |f from u+| - |f from u-| mismatch, normalized
    samples_per_branch: int

    def to_dict(self) -> dict:
        return _json_safe({
            "sign": self.sign,
            "per_shell": self.per_shell,
            "overall": self.overall,
            "forcing_agreement": self.forcing_agreement,
            "samples_per_branch": self.samples_per_branch,
        })


def residual_report(fields: SplitFields, sign: int = +1,
                    samples_per_branch: int = 64,
                    n_shells: int | None = None) -> ResidualReport:
    """Equation residual of u(sign), sampled at interior points of every
    support branch of every shell (plus the pre-support and tail stretches),
    normalized by the largest term of the shell's equation."""
    p = fields.params
    N = n_shells or p.n_shells
    lam, beta = p.lam, p.beta
    per_shell = np.zeros(N)
    agree = np.zeros(N)
    frac = (np.arange(1, samples_per_branch + 1)) / (samples_per_branch + 1.0)
    for i, n in enumerate(range(1, N + 1)):
        edges = fields.branch_edges(n)
        ts = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi - lo > 1e-300:
                ts.append(lo + (hi - lo) * frac)
        t = np.concatenate(ts)
        r = fields.residual(n, t, sign)
        fp = fields.forcing_rederived(n, t, +1)
        fm = fields.forcing_rederived(n, t, -1)
        un = fields.u(n, t, sign)
        um = fields.u(n - 1, t, sign)
        up = fields.u(n + 1, t, sign)
        scale = max(
            float(np.abs(fields.udot(n, t, sign)).max()),
            lam ** (2 * n) * float(np.abs(un).max()),
            lam ** (beta * n) * float(np.abs(um).max()) ** 2,
            lam ** (beta * (n + 1)) * float(np.abs(un * up).max()),
            float(np.abs(fields.f(n, t)).max()),
            1e-300,
        )
        per_shell[i] = float(np.abs(r).max()) / scale
        agree[i] = float(np.abs(fp - fm).max()) / scale
    return ResidualReport(sign=sign, shells=np.arange(1, N + 1),
                          per_shell=per_shell,
                          overall=float(per_shell.max()),
                          forcing_agreement=float(agree.max()),
                          samples_per_branch=samples_per_branch)


# ---------------------------------------------------------------------------
# energy and distinctness
# ---------------------------------------------------------------------------


@dataclass
class EnergySide:
    sign: int
    lhs: np.ndarray
    rhs: np.ndarray
    defect_rel: float
    sup_energy: float
    flux_total: float
    dissipation_partials: np.ndarray   # lam^(2n) int u_n^2, per shell
    dissipation_ratios: np.ndarray
    sup_shell: np.ndarray              # sup |u_n| per shell

    def to_dict(self) -> dict:
        return _json_safe({
            "sign": self.sign,
            "defect_rel": self.defect_rel,
            "sup_energy": self.sup_energy,
            "flux_total": self.flux_total,
            "dissipation_partials": self.dissipation_partials,
            "dissipation_ratios": self.dissipation_ratios,
            "sup_shell": self.sup_shell,
        })


@dataclass
class EnergyBundle:
    t: np.ndarray
    plus: EnergySide
    minus: EnergySide
    distinctness: float
    distinctness_time: float
    distinctness_identity_rel: float
    phi: np.ndarray                    # sum g_n^2 along t

    def side(self, sign: int) -> EnergySide:
        return self.plus if sign > 0 else self.minus


def energy_check(fields: SplitFields, n_shells: int | None = None,
                 s_grid: np.ndarray | None = None) -> EnergyBundle:
    """Truncated energy identity along both split solutions.

        sum u_n(t)^2 + 2 sum lam^(2n) int u_n^2
            + 2 lam^(beta(N+1)) int u_N^2 u_{N+1}  =  2 sum int f_n u_n

    (zero initial data).  One chronological sweep over the dyadic intervals
    evaluates v and g once and assembles both signs; within each interval
    the cumulative integrals use composite Simpson on the shared refined
    s-grid, whose end-zone spacing is matched to the closing crescendo of
    the difference field.

    The same sweep measures the distinctness sup_t sum_n (u+_n - u-_n)^2
    together with its algebraic identity 4 sum g_n^2.
    """
    p = fields.params
    N = n_shells or p.n_shells
    lam, beta = p.lam, p.beta
    if s_grid is None:
        s_grid = interval_s_grid(p, getattr(fields.q_profile, "eps", 0.0),
                                 fields.phase.gamma,
                                 getattr(fields.q_profile, "plateau", None))
    flux_w = lam ** (beta * (N + 1))

    t_all = []
    lhs = {+1: [], -1: []}
    rhs = {+1: [], -1: []}
    kin = {+1: [], -1: []}
    phi_all = []
    ident_max = 0.0
    diss_prev = {+1: 0.0, -1: 0.0}
    work_prev = {+1: 0.0, -1: 0.0}
    flux_prev = {+1: 0.0, -1: 0.0}
    diss_shell = {+1: np.zeros(N), -1: np.zeros(N)}
    sup_shell = {+1: np.zeros(N), -1: np.zeros(N)}

    for k in range(N, -1, -1):
        t, dt = interval_times(fields, k, s_grid)
        # the three window shells plus the two above: their exponential
        # tails still carry energy on I_k (the first one at full scale on
        # the final intervals, the second within double precision only
        # when the cycle amplification is moderate)
        act = [n for n in range(k, k + 5) if 1 <= n <= N]
        E = {+1: np.zeros_like(t), -1: np.zeros_like(t)}
        D = {+1: np.zeros_like(t), -1: np.zeros_like(t)}
        W = {+1: np.zeros_like(t), -1: np.zeros_like(t)}
        phi = np.zeros_like(t)
        ident = np.zeros_like(t)
        for n in act:
            vn = fields.v(n, t)
            gn = fields.g(n, t)
            fn = fields.f(n, t)
            phi += gn * gn
            w = lam ** (2 * n)
            for s in (+1, -1):
                un = vn + s * gn
                E[s] += un * un
                cum = dt * cumulative_simpson(un * un, x=s_grid, initial=0.0)
                D[s] += w * cum
                diss_shell[s][n - 1] += w * cum[-1]
                W[s] += dt * cumulative_simpson(fn * un, x=s_grid, initial=0.0)
                sup_shell[s][n - 1] = max(sup_shell[s][n - 1],
                                          float(np.abs(un).max()))
            ident += ((vn + gn) - (vn - gn)) ** 2
        ident_max = max(ident_max, float(np.abs(ident - 4.0 * phi).max()))

        # Boundary flux needs shells N, N+1 only; evaluating on every
        # interval costs little (the fields vanish off their support) and
        # avoids case analysis.
        FL = {+1: np.zeros_like(t), -1: np.zeros_like(t)}
        vN = fields.v(N, t)
        gN = fields.g(N, t)
        vP = fields.v(N + 1, t)
        gP = fields.g(N + 1, t)
        for s in (+1, -1):
            uN = vN + s * gN
            uP = vP + s * gP
            FL[s] = flux_w * dt * cumulative_simpson(uN * uN * uP,
                                                     x=s_grid, initial=0.0)

        for s in (+1, -1):
            lhs[s].append(E[s] + 2.0 * (diss_prev[s] + D[s])
                          + 2.0 * (flux_prev[s] + FL[s]))
            rhs[s].append(2.0 * (work_prev[s] + W[s]))
            kin[s].append(E[s])
            diss_prev[s] += float(D[s][-1])
            work_prev[s] += float(W[s][-1])
            flux_prev[s] += float(FL[s][-1])
        t_all.append(t)
        phi_all.append(phi)

    t_cat = np.concatenate(t_all)
    phi_cat = np.concatenate(phi_all)
    sides = {}
    for s in (+1, -1):
        L = np.concatenate(lhs[s])
        Rr = np.concatenate(rhs[s])
        scale = max(float(np.abs(L).max()), float(np.abs(Rr).max()), 1e-300)
        dsh = diss_shell[s]
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = np.where(dsh[:-1] > 0.0, dsh[1:] / dsh[:-1], np.nan)
        sides[s] = EnergySide(
            sign=s, lhs=L, rhs=Rr,
            defect_rel=float(np.abs(L - Rr).max()) / scale,
            sup_energy=float(np.concatenate(kin[s]).max()),
            flux_total=2.0 * flux_prev[s],
            dissipation_partials=dsh,
            dissipation_ratios=dr,
            sup_shell=sup_shell[s],
        )
    i_max = int(np.argmax(phi_cat))
    return EnergyBundle(
        t=t_cat, plus=sides[+1], minus=sides[-1],
        distinctness=4.0 * float(phi_cat[i_max]),
        distinctness_time=float(t_cat[i_max]),
        distinctness_identity_rel=(ident_max
                                   / max(4.0 * float(phi_cat[i_max]), 1e-300)),
        phi=phi_cat,
    )


# ---------------------------------------------------------------------------
# the certificate
# ---------------------------------------------------------------------------


@dataclass
class Certificate:
    """Everything the non-uniqueness claim rests on, as measured numbers.

    passed is the conjunction of the tolerance checks; to_dict() is the
    JSON artifact (deterministic field order, non-finite floats nulled).
    """

    params: dict
    tolerances: dict
    q: float
    eps: float
    gamma: float
    log_abs_rho: float
    rho_sign: float
    rho_hat: float
    y: float
    z: float
    residual_plus: ResidualReport
    residual_minus: ResidualReport
    gluing: dict
    energy_plus: dict
    energy_minus: dict
    forcing: dict
    distinctness: dict
    leray: dict
    checks: dict
    spectral: dict
    calibration: dict
    passed: bool

    def to_dict(self) -> dict:
        return _json_safe({
            "passed": self.passed,
            "params": self.params,
            "tolerances": self.tolerances,
            "q": self.q,
            "eps": self.eps,
            "gamma": self.gamma,
            "log_abs_rho": self.log_abs_rho,
            "rho_sign": self.rho_sign,
            "rho_hat": self.rho_hat,
            "y": self.y,
            "z": self.z,
            "residual_plus": self.residual_plus.to_dict(),
            "residual_minus": self.residual_minus.to_dict(),
            "gluing": self.gluing,
            "energy_plus": self.energy_plus,
            "energy_minus": self.energy_minus,
            "forcing": self.forcing,
            "distinctness": self.distinctness,
            "leray": self.leray,
            "checks": self.checks,
            "spectral": self.spectral,
            "calibration": self.calibration,
        })


def certify_nonuniqueness(params: Params, *, tol_residual: float = 1e-6,
                          tol_gluing: float = 1e-8, tol_energy: float = 1e-6,
                          rtol: float = 1e-12, margin: float = 0.5,
                          eps0: float = 0.05, texp_tol: float = 1e-7,
                          samples_per_branch: int = 64,
                          fields: SplitFields | None = None
                          ) -> tuple[Certificate, SplitFields]:
    """Run the whole pipeline and assemble the certificate.

    Raises PipelineError tagged with the failing stage for search,
    calibration, or numeric failures; tolerance violations do NOT raise --
    they make a certificate with passed = False.
    """
    if params.beta <= 2.0:
        raise ValueError("non-uniqueness requires beta > 2; at or below 2 "
                         "the cascade is rigid (see uniqueness_experiment)")

    if fields is None:
        try:
            fields = build_split_fields(params, rtol=rtol, margin=margin,
                                        eps0=eps0, texp_tol=texp_tol)
        except SearchError as exc:
            raise PipelineError("search", exc) from exc
        except CalibrationError as exc:
            raise PipelineError("calibration", exc) from exc
        except NumericError as exc:
            raise PipelineError("construction", exc) from exc

    try:
        res_p = residual_report(fields, +1, samples_per_branch)
        res_m = residual_report(fields, -1, samples_per_branch)
        glue = fields.gluing_defects()
        bundle = energy_check(fields)
        partials = forcing_norm_partials(fields)
    except NumericError as exc:
        raise PipelineError("verification", exc) from exc

    p = fields.params
    lam, beta = p.lam, p.beta
    N = p.n_shells
    target = lam ** (4.0 - 2.0 * beta)
    hi = min(N - 1, len(partials.ratios))
    lo = min(4, hi)
    tail = partials.ratios[lo:hi]
    tail_err = (float(np.abs(tail / target - 1.0).max()) if len(tail)
                else math.nan)

    leray = {
        "kinetic_sup": max(bundle.plus.sup_energy, bundle.minus.sup_energy),
        "kinetic_bounded": bool(np.isfinite(bundle.plus.sup_energy)
                                and np.isfinite(bundle.minus.sup_energy)),
        "dissipation_tail_ratio": float(np.nanmax(
            [bundle.plus.dissipation_ratios[lo:hi].max(initial=-np.inf),
             bundle.minus.dissipation_ratios[lo:hi].max(initial=-np.inf)])),
        "forcing_tail_ratio_max": (float(tail.max()) if len(tail) else math.nan),
        "tails_contract": bool(len(tail) and tail.max() < 1.0),
    }

    tolerances = {
        "tol_residual": tol_residual,
        "tol_gluing": tol_gluing,
        "tol_energy": tol_energy,
        "rtol": rtol,
        "ratio_window": [lo + 1, hi + 1],
    }

    ok = (res_p.overall <= tol_residual
          and res_m.overall <= tol_residual
          and glue["rel"] <= tol_gluing
          and bundle.plus.defect_rel <= tol_energy
          and bundle.minus.defect_rel <= tol_energy
          and bundle.distinctness > 0.0
          and leray["kinetic_bounded"]
          and leray["tails_contract"])

    cert = Certificate(
        params={"lambda": lam, "beta": beta, "n_shells": N,
                "rho_threshold": p.rho_threshold, "horizon": p.horizon},
        tolerances=tolerances,
        q=fields.report.q if fields.report else math.nan,
        eps=fields.phase.eps,
        gamma=fields.phase.gamma,
        log_abs_rho=fields.log_abs_rho,
        rho_sign=fields.rho_sign,
        rho_hat=fields.rho_hat,
        y=fields.y,
        z=fields.z,
        residual_plus=res_p,
        residual_minus=res_m,
        gluing=_json_safe(glue),
        energy_plus=bundle.plus.to_dict(),
        energy_minus=bundle.minus.to_dict(),
        forcing=_json_safe({
            "increments": partials.increments,
            "partials": partials.partials,
            "ratios": partials.ratios,
            "tail_ratio_target": target,
            "tail_ratio_max_rel_err": tail_err,
        }),
        distinctness=_json_safe({
            "value": bundle.distinctness,
            "time": bundle.distinctness_time,
            "identity_rel": bundle.distinctness_identity_rel,
        }),
        leray=_json_safe(leray),
        checks=_json_safe(fields.checks),
        spectral=fields.report.to_dict() if fields.report else {},
        calibration=fields.calibration.to_dict() if fields.calibration else {},
        passed=bool(ok),
    )
    return cert, fields


# ---------------------------------------------------------------------------
# the uniqueness regime
# ---------------------------------------------------------------------------


@dataclass
class UniquenessReport:
    params: dict
    n_list: list
    perturbation: float
    endpoint_distances: dict
    phi_initial: float
    phi_final: float
    contracted: bool

    def to_dict(self) -> dict:
        return _json_safe({
            "params": self.params,
            "n_list": self.n_list,
            "perturbation": self.perturbation,
            "endpoint_distances": self.endpoint_distances,
            "phi_initial": self.phi_initial,
            "phi_final": self.phi_final,
            "contracted": self.contracted,
        })


def uniqueness_experiment(params: Params, *, n_list: Sequence[int] = (8, 12),
                          perturbation: float = 1e-6,
                          initial=None, forcing=None,
                          t_end: float | None = None,
                          rtol: float = 1e-10, atol: float = 1e-14
                          ) -> UniquenessReport:
    """Resolution and perturbation sweep in the rigid regime beta <= 2.

    Solves the truncated system at each N in n_list and, at the largest N,
    from data perturbed by +-perturbation on every shell.  Reports pairwise
    endpoint l2 distances (shorter solutions zero-padded) and the evolution
    of the separation Phi(t) = sum_n (u1_n - u2_n)^2 between the two
    perturbed runs, which the Gronwall mechanism makes non-expanding up to
    integrator error.
    """
    if params.beta > 2.0:
        raise ValueError("the uniqueness experiment applies to beta <= 2")
    t_end = t_end or params.horizon
    n_max = max(n_list)

    def default_initial(N):
        return params.lam ** (-np.arange(1, N + 1, dtype=float))

    def run(N, bump=0.0):
        init = (default_initial(N) if initial is None
                else np.asarray(initial, dtype=float)[:N].copy())
        init = init + bump
        cfg = SolveConfig(t_end=t_end, n_shells=N, rtol=rtol, atol=atol,
                          initial=init, forcing=forcing)
        traj = galerkin_solve(cfg, params.with_shells(N))
        if traj.diverged:
            raise NumericError(f"unexpected blow-up at N={N}")
        return traj

    trajs = {N: run(N) for N in n_list}
    distances = {}
    for i, Na in enumerate(n_list):
        for Nb in list(n_list)[i + 1:]:
            ua, ub = trajs[Na].u[-1], trajs[Nb].u[-1]
            m = max(len(ua), len(ub))
            pa = np.zeros(m)
            pa[:len(ua)] = ua
            pb = np.zeros(m)
            pb[:len(ub)] = ub
            distances[f"N{Na}_vs_N{Nb}"] = float(np.linalg.norm(pa - pb))

    up = run(n_max, bump=+perturbation)
    um = run(n_max, bump=-perturbation)
    # the two runs share the default output grid, so the curves subtract
    phi0 = float(((up.u[0] - um.u[0]) ** 2).sum())
    phiT = float(((up.u[-1] - um.u[-1]) ** 2).sum())
    distances[f"perturbed_pm_N{n_max}"] = math.sqrt(phiT)

    return UniquenessReport(
        params={"lambda": params.lam, "beta": params.beta},
        n_list=list(n_list),
        perturbation=perturbation,
        endpoint_distances=distances,
        phi_initial=phi0,
        phi_final=phiT,
        contracted=bool(phiT <= phi0 * (1.0 + 1e-6) + 1e-20),
    )
