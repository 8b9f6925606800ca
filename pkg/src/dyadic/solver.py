"""Adaptive Galerkin solver for the truncated cascade.

The linear part of the system is diagonal and brutally stiff (decay rates
lam^(2n) span many orders across shells), but it is solved exactly by the
per-shell integrating factor; only the quadratic transfer and the forcing
need a timestepper.  The scheme here is the fourth-order exponential
Runge-Kutta of Cox and Matthews: each stage propagates the linear flow
exactly through exp(h L) and phi-function weights, so a zero nonlinearity
is integrated without any error at all, and constant forcing is likewise
exact (the stage weights sum to phi_1).  Step size is controlled by the
doubled-step estimate: one full step against two half steps, error
ratio 1/15.

Forcing follows the per-shell evaluator convention f(n, t) -> real with
shells numbered from 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import NumericError, Params, Trajectory, shell_rhs
from .construction import ShellGrid, SplitFields

_PHI_TERMS = 17


def _phi123(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """phi_k(z) = (e^z - partial sum)/z^k for k = 1, 2, 3, elementwise.

    A truncated Taylor series below |z| = 1 avoids the subtractive
    cancellation of the closed forms, which are fine (and used) elsewhere.
    """
    z = np.asarray(z, dtype=float)
    out = []
    small = np.abs(z) < 1.0
    zs = z[small]
    zb = np.where(small, 1.0, z)  # placeholder avoids 0/0 warnings
    with np.errstate(over="ignore"):
        em1 = np.expm1(zb)
    for k in (1, 2, 3):
        acc = np.zeros_like(zs)
        for j in range(_PHI_TERMS, -1, -1):
            acc = acc * zs + 1.0 / math.factorial(j + k)
        big = em1.copy()
        if k >= 2:
            big -= zb
        if k >= 3:
            big -= 0.5 * zb * zb
        vals = big / zb**k
        vals[small] = acc
        out.append(vals)
    return out[0], out[1], out[2]


@dataclass
class SolveConfig:
    """Configuration for one Galerkin solve.

    forcing     per-shell evaluator f(n, t) -> real, shells 1..N; None = 0
    initial     length-N vector (None = rest)
    t_eval      output times; default is the dyadic grid with midpoints,
                each gap filled to samples_per_interval points
    """

    t_end: float
    n_shells: int | None = None
    rtol: float = 1e-8
    atol: float = 1e-12
    initial: np.ndarray | None = None
    forcing: Callable[[int, float], float] | None = None
    samples_per_interval: int = 16
    t_eval: np.ndarray | None = None
    h0: float | None = None
    blowup_guard: float = 1e12

    def __post_init__(self):
        if not (self.t_end > 0.0):
            raise ValueError("t_end must be positive")
        if not (self.rtol > 0.0 and self.atol > 0.0):
            raise ValueError("tolerances must be positive")


def zero_forcing(n: int, t: float) -> float:
    return 0.0


def constant_forcing(c: float) -> Callable[[int, float], float]:
    return lambda n, t: c


def vector_forcing(vec: np.ndarray) -> Callable[[int, float], float]:
    vec = np.asarray(vec, dtype=float)
    return lambda n, t: float(vec[n - 1])


def constructed_forcing(fields: SplitFields) -> Callable[[int, float], float]:
    """The shared forcing of the split construction as a solver evaluator.
    Exact but evaluator-call priced; intended for moderate N."""
    return lambda n, t: float(fields.f(n, np.asarray([t]))[0])


def output_grid(p: Params, t_end: float,
                samples_per_interval: int = 16) -> np.ndarray:
    """Geometric output grid: every dyadic switching time below t_end, the
    midpoints between them, and each remaining gap filled uniformly."""
    grid = ShellGrid(p.lam, p.n_shells)
    anchors = {0.0, t_end}
    for k in range(p.n_shells + 2):
        tk = grid.t(k)
        if tk < t_end:
            anchors.add(tk)
    pts = sorted(anchors)
    mids = [(a + b) / 2.0 for a, b in zip(pts[:-1], pts[1:])]
    pts = sorted(set(pts) | set(mids))
    out = []
    m = max(1, samples_per_interval // 2)
    for a, b in zip(pts[:-1], pts[1:]):
        out.append(np.linspace(a, b, m + 1)[:-1])
    out.append(np.asarray([t_end]))
    return np.unique(np.concatenate(out))


def _forcing_vector(forcing, shells: np.ndarray) -> Callable[[float], np.ndarray]:
    if forcing is None:
        zero = np.zeros(len(shells))
        return lambda t: zero
    return lambda t: np.asarray([forcing(int(n), t) for n in shells], dtype=float)


def galerkin_solve(cfg: SolveConfig, p: Params) -> Trajectory:
    """Integrate the N-shell system from cfg.initial under cfg.forcing.

    Divergence past the blow-up guard is reported on the trajectory, not
    raised: the supercritical regime can blow up legitimately and the
    partial trajectory is the informative artifact.
    """
    N = cfg.n_shells or p.n_shells
    pN = p.with_shells(N)
    L = -pN.dissipation
    a = (np.zeros(N) if cfg.initial is None
         else np.asarray(cfg.initial, dtype=float).copy())
    if a.shape != (N,):
        raise ValueError(f"initial data must have length {N}")
    fvec = _forcing_vector(cfg.forcing, pN.shells)

    t_out = (np.asarray(cfg.t_eval, dtype=float) if cfg.t_eval is not None
             else output_grid(pN, cfg.t_end, cfg.samples_per_interval))
    if t_out[0] != 0.0 or abs(t_out[-1] - cfg.t_end) > 1e-12 * cfg.t_end:
        raise ValueError("t_eval must run from 0 to t_end")
    if np.any(np.diff(t_out) <= 0.0):
        raise ValueError("t_eval must be strictly increasing")

    def nonlin(u: np.ndarray, t: float) -> np.ndarray:
        return shell_rhs(u, fvec(t), pN) + pN.dissipation * u

    def step(u: np.ndarray, t: float, h: float) -> np.ndarray:
        z = h * L
        E = np.exp(z)
        E2 = np.exp(0.5 * z)
        p1h, _, _ = _phi123(0.5 * z)
        Q = 0.5 * h * p1h
        p1, p2, p3 = _phi123(z)
        w1 = h * (p1 - 3.0 * p2 + 4.0 * p3)
        w2 = h * (p2 - 2.0 * p3)
        w3 = h * (4.0 * p3 - p2)
        Nu = nonlin(u, t)
        sa = E2 * u + Q * Nu
        Na = nonlin(sa, t + 0.5 * h)
        sb = E2 * u + Q * Na
        Nb = nonlin(sb, t + 0.5 * h)
        sc = E2 * sa + Q * (2.0 * Nb - Nu)
        Nc = nonlin(sc, t + h)
        return E * u + w1 * Nu + 2.0 * w2 * (Na + Nb) + w3 * Nc

    u = a.copy()
    t = 0.0
    states = np.empty((len(t_out), N))
    states[0] = u
    idx = 1
    h = cfg.h0 or cfg.t_end / 256.0
    n_acc = n_rej = 0
    err_accum = 0.0
    diverged = False
    blowup_time = None
    t_floor = 1e-14 * cfg.t_end

    while idx < len(t_out) and not diverged:
        target = t_out[idx]
        while t < target:
            h_try = min(h, target - t)
            if h_try < t_floor:
                raise NumericError(f"step size underflow at t = {t}")
            coarse = step(u, t, h_try)
            half = step(u, t, 0.5 * h_try)
            fine = step(half, t + 0.5 * h_try, 0.5 * h_try)
            if not np.all(np.isfinite(fine)):
                diverged = True
                blowup_time = t
                break
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(u), np.abs(fine))
            err = float(np.sqrt(np.mean(((fine - coarse) / (15.0 * scale)) ** 2)))
            if err <= 1.0:
                t += h_try
                if target - t <= t_floor:
                    t = target
                u = fine
                n_acc += 1
                err_accum += err * float(np.linalg.norm(scale))
                if np.abs(u).max() > cfg.blowup_guard:
                    diverged = True
                    blowup_time = t
                    break
                fac = 0.9 * (max(err, 1e-10)) ** (-0.2)
            else:
                n_rej += 1
                fac = 0.9 * err ** (-0.2)
            h = h_try * min(max(fac, 0.2), 5.0)
        if diverged:
            break
        states[idx] = u
        idx += 1

    t_used = t_out[:idx]
    states = states[:idx]
    f_samples = None
    if cfg.forcing is not None:
        f_samples = np.stack([fvec(tv) for tv in t_used])
    stats = {"n_accepted": n_acc, "n_rejected": n_rej,
             "err_accum": err_accum, "n_shells": N}
    return Trajectory(t=t_used, u=states, params=pN, f=f_samples,
                      diverged=diverged, blowup_time=blowup_time, stats=stats)


def local_existence_interval(cfg: SolveConfig, p: Params) -> float:
    """Guaranteed existence interval delta = 1/(2 C (R + 1)).

    R bounds the data, R = 2|a| + 2 int_0^t_end |f(t)| dt (l2 norms,
    trapezoid quadrature on the output grid), and C is the explicit
    Lipschitz bound lam^(2N) + 3 lam^(beta(N+1)) of the truncated
    right-hand side: the linear part contributes lam^(2N) and each of the
    three appearances of a quadratic factor at most lam^(beta(N+1)) per
    unit ball.
    """
    N = cfg.n_shells or p.n_shells
    pN = p.with_shells(N)
    a = np.zeros(N) if cfg.initial is None else np.asarray(cfg.initial, float)
    C = pN.lam ** (2 * N) + 3.0 * pN.lam ** (pN.beta * (N + 1))
    fnorm = 0.0
    if cfg.forcing is not None:
        ts = output_grid(pN, cfg.t_end, cfg.samples_per_interval)
        fv = _forcing_vector(cfg.forcing, pN.shells)
        norms = np.asarray([np.linalg.norm(fv(tv)) for tv in ts])
        fnorm = float(np.trapezoid(norms, ts))
    R = 2.0 * float(np.linalg.norm(a)) + 2.0 * fnorm
    return 1.0 / (2.0 * C * (R + 1.0))


def energy_inequality_check(traj: Trajectory, initial: np.ndarray | None = None,
                            p: Params | None = None) -> dict:
    """A-priori energy bound along a trajectory:

        sum u_n(t)^2 + sum lam^(2n) int u_n^2  <=  sum a_n^2
                                                   + sum lam^(-2n) int f_n^2

    (the forcing term enters through the weighted Cauchy inequality, which
    is where the lam^(-2n) weights come from).  Returns the worst signed
    defect lhs - rhs over the sample grid; negative means the inequality
    holds strictly.
    """
    from scipy.integrate import cumulative_trapezoid

    p = p or traj.params
    a = (np.zeros(p.n_shells) if initial is None
         else np.asarray(initial, dtype=float))
    u2 = traj.u**2
    diss = cumulative_trapezoid(u2, traj.t, axis=0, initial=0.0)
    lhs = u2.sum(axis=1) + (diss * p.dissipation).sum(axis=1)
    rhs = np.full(len(traj.t), float(np.dot(a, a)))
    if traj.f is not None:
        f2 = traj.f**2
        work = cumulative_trapezoid(f2, traj.t, axis=0, initial=0.0)
        rhs = rhs + (work / p.dissipation).sum(axis=1)
    defect = lhs - rhs
    worst = int(np.argmax(defect))
    scale = max(float(lhs.max()), float(rhs.max()), 1e-300)
    return {
        "max_signed_defect": float(defect[worst]),
        "max_defect_rel": float(defect[worst] / scale),
        "t_worst": float(traj.t[worst]),
        "lhs_end": float(lhs[-1]),
        "rhs_end": float(rhs[-1]),
    }
