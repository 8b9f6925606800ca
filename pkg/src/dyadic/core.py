"""Dyadic shell cascade: state types, right-hand side, energy bookkeeping.

The model is a chain of scalar shell amplitudes u_1 .. u_N with geometric
wavenumbers lam**n.  Shell n obeys

    du_n/dt = f_n - lam**(2n) u_n + lam**(b n) u_{n-1}**2
              - lam**(b (n+1)) u_n u_{n+1},

with the convention u_0 = u_{N+1} = 0.  The quadratic terms telescope: the
energy they move out of shell n through its bottom face reappears in shell
n+1, so the nonlinearity conserves energy exactly and all dissipation comes
from the lam**(2n) term.  Everything downstream (spectral analysis of the
amplification cycle, the split-field construction, the Galerkin solver)
speaks in terms of the arrays defined here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid


class NumericError(RuntimeError):
    """Raised when a numerical routine leaves its validated regime."""


def _as_float_array(x, name: str, shape=None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class Params:
    """Model parameters for the dyadic cascade.

    lam           shell ratio, > 1
    beta          intermittency exponent of the nonlinear coupling
    n_shells      truncation level N >= 1
    rho_threshold amplification target for the spectral search;
                  defaults to lam**beta, the minimum needed by the
                  two-solution construction
    horizon       working time horizon; defaults to 1/(lam**2 - 1),
                  which makes the dyadic instants t_n nest exactly
    """

    lam: float = 2.0
    beta: float = 2.5
    n_shells: int = 10
    rho_threshold: float | None = None
    horizon: float | None = None

    def __post_init__(self):
        if not (self.lam > 1.0):
            raise ValueError(f"lam must exceed 1, got {self.lam}")
        if not (self.beta > 0.0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not (isinstance(self.n_shells, (int, np.integer)) and self.n_shells >= 1):
            raise ValueError(f"n_shells must be an integer >= 1, got {self.n_shells}")
        object.__setattr__(self, "n_shells", int(self.n_shells))
        if self.rho_threshold is None:
            object.__setattr__(self, "rho_threshold", float(self.lam) ** self.beta)
        if not (self.rho_threshold > 0.0):
            raise ValueError("rho_threshold must be positive")
        if self.horizon is None:
            object.__setattr__(self, "horizon", 1.0 / (self.lam**2 - 1.0))
        if not (self.horizon > 0.0):
            raise ValueError("horizon must be positive")

    @cached_property
    def shells(self) -> np.ndarray:
        """Shell indices 1..N."""
        return np.arange(1, self.n_shells + 1)

    @cached_property
    def dissipation(self) -> np.ndarray:
        """Dissipative rates lam**(2n), n = 1..N."""
        return self.lam ** (2.0 * self.shells)

    @cached_property
    def flux_in(self) -> np.ndarray:
        """Coupling lam**(beta n) feeding shell n from below."""
        return self.lam ** (self.beta * self.shells)

    @cached_property
    def flux_out(self) -> np.ndarray:
        """Coupling lam**(beta (n+1)) draining shell n into shell n+1."""
        return self.lam ** (self.beta * (self.shells + 1))

    def check_state(self, u, name: str = "u") -> np.ndarray:
        return _as_float_array(u, name, shape=(self.n_shells,))

    def with_shells(self, n_shells: int) -> "Params":
        return replace(self, n_shells=n_shells)


def shell_rhs(u, f, p: Params) -> np.ndarray:
    """Right-hand side of the truncated cascade at state u with forcing f.

    Both u and f are arrays over shells 1..N; the boundary conventions
    u_0 = u_{N+1} = 0 are built in.
    """
    u = p.check_state(u)
    f = p.check_state(f, "f") if f is not None else 0.0
    below = np.empty_like(u)
    below[0] = 0.0
    below[1:] = u[:-1]
    above = np.empty_like(u)
    above[-1] = 0.0
    above[:-1] = u[1:]
    return f - p.dissipation * u + p.flux_in * below**2 - p.flux_out * u * above


def nonlinear_energy_flux(u, p: Params) -> float:
    """Total energy transfer by the quadratic terms, sum over shells of
    u_n * (-lam**(beta n) u_{n-1}**2 + lam**(beta (n+1)) u_n u_{n+1}).

    The sum telescopes to zero for every state, which is the discrete
    analogue of the nonlinearity doing no net work.  Returned as a float
    so tests can watch the cancellation directly.
    """
    u = p.check_state(u)
    below = np.concatenate(([0.0], u[:-1]))
    above = np.concatenate((u[1:], [0.0]))
    terms = u * (-p.flux_in * below**2 + p.flux_out * u * above)
    return float(np.sum(terms))


@dataclass
class Trajectory:
    """Discrete-time trajectory of the truncated cascade.

    t        sample times, strictly increasing, t[0] is the initial time
    u        states, shape (len(t), N)
    params   the Params the trajectory was produced under
    f        forcing samples aligned with t (optional, shape like u)
    diverged True if the integration hit the blow-up guard
    blowup_time  first time the guard tripped, when diverged
    stats    integrator bookkeeping (step counts, rejections, ...)
    """

    t: np.ndarray
    u: np.ndarray
    params: Params
    f: np.ndarray | None = None
    diverged: bool = False
    blowup_time: float | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.t.ndim != 1 or len(self.t) < 1:
            raise ValueError("t must be a nonempty 1-d array")
        if self.u.shape != (len(self.t), self.params.n_shells):
            raise ValueError(
                f"u must have shape ({len(self.t)}, {self.params.n_shells}), "
                f"got {self.u.shape}"
            )
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("t must be strictly increasing")
        if self.f is not None:
            self.f = np.asarray(self.f, dtype=float)
            if self.f.shape != self.u.shape:
                raise ValueError("f must have the same shape as u")

    @property
    def energy(self) -> np.ndarray:
        """Kinetic energy sum_n u_n(t)**2 at each sample."""
        return np.sum(self.u**2, axis=1)

    def state_at(self, t: float) -> np.ndarray:
        """Linear interpolation of the state at time t within the grid."""
        if not (self.t[0] <= t <= self.t[-1]):
            raise ValueError(f"t={t} outside trajectory range")
        return np.array(
            [np.interp(t, self.t, self.u[:, j]) for j in range(self.u.shape[1])]
        )


def energy_balance(traj: Trajectory, t: float | None = None, initial=None):
    """Two sides of the energy identity for the truncated cascade,

        sum_n u_n(t)**2 + 2 sum_n lam**(2n) int_0^t u_n**2
            = sum_n a_n**2 + 2 sum_n int_0^t f_n u_n .

    The nonlinear flux cancels exactly for the truncated system, so the
    identity holds up to integrator and quadrature error.  Integrals use
    composite trapezoid on the trajectory's own grid.

    Returns (lhs, rhs): arrays over the whole grid when t is None,
    otherwise floats at time t (linear interpolation within the grid).
    initial defaults to the first state of the trajectory.
    """
    p = traj.params
    a = traj.u[0] if initial is None else p.check_state(initial, "initial")
    if traj.f is None:
        work_density = np.zeros(len(traj.t))
    else:
        work_density = np.sum(traj.f * traj.u, axis=1)
    diss_density = np.sum(traj.params.dissipation * traj.u**2, axis=1)

    diss = cumulative_trapezoid(diss_density, traj.t, initial=0.0)
    work = cumulative_trapezoid(work_density, traj.t, initial=0.0)
    lhs = traj.energy + 2.0 * diss
    rhs = float(np.sum(a**2)) + 2.0 * work
    if t is None:
        return lhs, rhs
    if not (traj.t[0] <= t <= traj.t[-1]):
        raise ValueError(f"t={t} outside trajectory range")
    return float(np.interp(t, traj.t, lhs)), float(np.interp(t, traj.t, rhs))


ForcingFn = Callable[[float], np.ndarray]


def forcing_from_scalar(fn: Callable[[int, float], float], p: Params) -> ForcingFn:
    """Wrap a per-shell scalar forcing fn(n, t) into a vector evaluator."""

    def vector(t: float) -> np.ndarray:
        return np.array([fn(n, t) for n in range(1, p.n_shells + 1)], dtype=float)

    return vector
