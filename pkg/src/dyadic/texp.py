"""Time-ordered matrix exponentials by midpoint product integration.

The propagator of h' = M(t) h over [a, b] is approximated by the ordered
product of single-step exponentials expm(dt * M(midpoint)), refining the
subdivision by doubling until two successive refinements agree in operator
norm.  The scheme is exact for constant M (each factor already is the
propagator), second order in general, and its convergence criterion is
directly auditable: the returned matrix differs from the previous
refinement level by less than the requested tolerance.

Matrix norms are spectral (largest singular value).  The module also
provides the standard perturbation bound

    ||P1 - P2|| <= expm(max(L1, L2)) * int ||M1(t) - M2(t)|| dt,

with L_i the integrated norms of the two generators; the bound is loose
(it exponentiates the integrated norm) but is exactly the inequality the
calibration step records, so it is available in log form as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .core import NumericError

# Pade(7) numerator coefficients for expm, double precision theta bound.
_PADE7 = (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0)
_THETA7 = 0.95


def op_norm(M: np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    return float(np.linalg.svd(M, compute_uv=False)[0])


@dataclass
class MatrixPath:
    """Matrix-valued coefficient path M(t) on [a, b].

    matrix        scalar evaluator t -> (d, d)
    matrix_batch  optional vectorized evaluator (m,) -> (m, d, d); the
                  product integrator falls back to a python loop without it,
                  which is fine for small refinements only
    l1_norm       int_a^b ||M(t)|| dt, computed lazily by adaptive
                  quadrature and cached
    """

    a: float
    b: float
    matrix: Callable[[float], np.ndarray]
    matrix_batch: Callable[[np.ndarray], np.ndarray] | None = None
    _l1_cache: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.b > self.a):
            raise ValueError(f"need a < b, got [{self.a}, {self.b}]")

    @property
    def interval(self):
        return (self.a, self.b)

    def sample(self, ts: np.ndarray) -> np.ndarray:
        if self.matrix_batch is not None:
            return np.asarray(self.matrix_batch(ts), dtype=float)
        return np.stack([np.asarray(self.matrix(t), dtype=float) for t in ts])

    @property
    def l1_norm(self) -> float:
        if self._l1_cache is None:
            val, _ = quad(lambda t: op_norm(self.matrix(t)), self.a, self.b,
                          limit=400, epsabs=1e-12, epsrel=1e-10)
            self._l1_cache = float(val)
        return self._l1_cache


def constant_path(M: np.ndarray, a: float = 0.0, b: float = 1.0) -> MatrixPath:
    M = np.asarray(M, dtype=float)

    def batch(ts):
        return np.broadcast_to(M, (len(ts),) + M.shape).copy()

    return MatrixPath(a=a, b=b, matrix=lambda t: M, matrix_batch=batch)


def _expm_batch(H: np.ndarray) -> np.ndarray:
    """expm of a batch of small square matrices, Pade(7) scaling-squaring.

    One global squaring count (from the worst norm in the batch) keeps the
    whole computation in a handful of batched matmuls.
    """
    H = np.asarray(H, dtype=float)
    d = H.shape[-1]
    norms = np.abs(H).sum(axis=-1).max(axis=-1)  # row-sum norm per matrix
    worst = float(norms.max()) if norms.size else 0.0
    s = max(0, int(math.ceil(math.log2(worst / _THETA7)))) if worst > _THETA7 else 0
    A = H * (0.5**s)
    I = np.broadcast_to(np.eye(d), A.shape)
    b = _PADE7
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
    V = b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


def _ordered_product(E: np.ndarray) -> np.ndarray:
    """Product E[m-1] @ ... @ E[0] by pairwise tree reduction (the array is
    chronological; later factors multiply on the left)."""
    while E.shape[0] > 1:
        m = E.shape[0]
        even = m - (m % 2)
        P = np.matmul(E[1:even:2], E[0:even:2])
        if m % 2:
            P = np.concatenate([P, E[even:even + 1]])
        E = P
    return E[0]


def _refinement(path: MatrixPath, m: int) -> np.ndarray:
    dt = (path.b - path.a) / m
    mids = path.a + (np.arange(m) + 0.5) * dt
    H = path.sample(mids) * dt
    if not np.all(np.isfinite(H)):
        raise NumericError("matrix path produced non-finite samples")
    return _ordered_product(_expm_batch(H))


def texp(path: MatrixPath, tol: float | None = None, m0: int = 8,
         m_cap: int = 2**23, *, tol_rel: float | None = None) -> np.ndarray:
    """Propagator of h' = M(t) h over path.interval, refined by doubling
    until the operator-norm change between successive levels drops below
    tol (absolute), tol_rel * ||result|| (relative), or their sum when both
    are given.  The relative mode is what strongly amplifying paths need:
    their propagator norm is not known beforehand.

    Raises NumericError carrying the last two iterates if the subdivision
    cap is reached without meeting the tolerance.
    """
    if tol is None and tol_rel is None:
        raise ValueError("one of tol, tol_rel is required")
    if tol is not None and not (tol > 0.0):
        raise ValueError("tol must be positive")
    if tol_rel is not None and not (tol_rel > 0.0):
        raise ValueError("tol_rel must be positive")
    prev = _refinement(path, m0)
    older = prev
    m = 2 * m0
    while m <= m_cap:
        cur = _refinement(path, m)
        if not np.all(np.isfinite(cur)):
            raise NumericError(f"texp refinement at m={m} overflowed")
        target = (tol or 0.0) + (tol_rel or 0.0) * op_norm(cur)
        if op_norm(cur - prev) < target:
            return cur
        older, prev = prev, cur
        m *= 2
    err = NumericError(
        f"texp did not converge (tol={tol}, tol_rel={tol_rel}) "
        f"within {m_cap} subdivisions"
    )
    err.last_two = (older, prev)
    raise err


def texp_continuity_bound(path1: MatrixPath, path2: MatrixPath,
                          log: bool = False) -> float:
    """A-priori bound expm(max L1, L2) * int ||M1 - M2|| on the propagator
    difference of two coefficient paths over the same interval.

    With log=True the natural log of the bound is returned, which stays
    finite when the raw bound overflows (the integrated norms of the stiff
    calibration paths put the raw bound far beyond float range; the bound
    is still valid, just recorded in log form).
    """
    if abs(path1.a - path2.a) > 1e-12 or abs(path1.b - path2.b) > 1e-12:
        raise ValueError("paths must share their interval")

    diff, _ = quad(lambda t: op_norm(path1.matrix(t) - path2.matrix(t)),
                   path1.a, path1.b, limit=400, epsabs=1e-12, epsrel=1e-10)
    L = max(path1.l1_norm, path2.l1_norm)
    if log:
        return L + (math.log(diff) if diff > 0.0 else -math.inf)
    with np.errstate(over="ignore"):
        return float(np.exp(L) * diff)
