"""Spectral analysis of the one-cycle amplification map.

Linearizing the cascade around the moving split-field profile and rescaling
one dyadic interval to unit length turns shell-to-shell propagation into a
fixed 3x3 coefficient matrix q*A(q), where q is the plateau height of the
main profile and

    A(q) = [[1 - lam**-2 / q, -1/2,      0        ],
            [1,               -1/q,      lam**beta ],
            [0,               -2 lam**beta, -lam**2 / q]].

A(q) has one real eigenvalue kappa and a complex pair w, wbar in the regime
of interest.  The cycle map is B = expm(q A(q)); its lower-right 2x2 action
(the part seen by a fresh shell) is Btilde, and the per-shell amplification
factor rho is the dominant real eigenvalue of Btilde.  rho is the root of a
quadratic U rho**2 + V rho + W = 0 whose coefficients come from the
eigenvector geometry of A, which is how the search below decides, for given
(lam, beta), a plateau height q with |rho| above any requested threshold.

At the q that the search settles on, expm(q kappa) overflows float64, so
every quantity with such growth is carried both as a raw float (inf once
past overflow, under an errstate) and as a log-magnitude plus sign.  All
comparisons the search performs happen in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import NumericError, Params


class SearchError(RuntimeError):
    """Search exhausted its grid; carries the per-candidate failure trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []


# ---------------------------------------------------------------------------
# characteristic polynomial and matrices
# ---------------------------------------------------------------------------


def char_poly_A0(alpha, p: Params):
    """det(alpha I - A0) = alpha**3 - alpha**2 + (1/2 + 2 lam**(2 beta)) alpha
    - 2 lam**(2 beta), the limiting characteristic polynomial as q -> inf."""
    l2b = p.lam ** (2.0 * p.beta)
    alpha = np.asarray(alpha, dtype=float) if np.ndim(alpha) else alpha
    return alpha**3 - alpha**2 + (0.5 + 2.0 * l2b) * alpha - 2.0 * l2b


def matrix_A0(p: Params) -> np.ndarray:
    lb = p.lam**p.beta
    return np.array(
        [
            [1.0, -0.5, 0.0],
            [1.0, 0.0, lb],
            [0.0, -2.0 * lb, 0.0],
        ]
    )


def matrix_A(q: float, p: Params) -> np.ndarray:
    if not (q > 0):
        raise ValueError(f"q must be positive, got {q}")
    lb = p.lam**p.beta
    return np.array(
        [
            [1.0 - p.lam**-2.0 / q, -0.5, 0.0],
            [1.0, -1.0 / q, lb],
            [0.0, -2.0 * lb, -p.lam**2.0 / q],
        ]
    )


# ---------------------------------------------------------------------------
# eigenstructure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenBasis:
    """Real eigenvalue kappa, complex eigenvalue w (Im w > 0), and the real
    basis (v1, v2, v3) = (vec(kappa), Re vec(w), Im vec(w)) built from the
    analytic eigenvector formulas, first component normalized to 1.

    residual is the worst relative eigenpair defect max ||A v - alpha v|| /
    ((1 + |alpha|) ||v||) over both eigenpairs.
    """

    kappa: float
    w: complex
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    residual: float
    q: float  # inf for the limiting matrix A0

    @property
    def y1(self):
        return self.v1[1]

    @property
    def y3(self):
        return self.v3[1]

    @property
    def z3(self):
        return self.v3[2]


def _eigvec(alpha, q: float, p: Params):
    """Analytic eigenvector (1, y, z) of A(q) (q = inf gives A0)."""
    lb = p.lam**p.beta
    if math.isinf(q):
        y = 2.0 * (1.0 - alpha)
        z = -2.0 * lb * y / alpha
    else:
        y = 2.0 * (1.0 - p.lam**-2.0 / q - alpha)
        z = -2.0 * lb * y / (alpha + p.lam**2.0 / q)
    return y, z


def _pair_residual(A: np.ndarray, alpha, v) -> float:
    v = np.asarray(v)
    defect = np.linalg.norm(A @ v - alpha * v)
    return float(defect / ((1.0 + abs(alpha)) * np.linalg.norm(v)))


def _basis_from_roots(kappa: float, w: complex, q: float, p: Params) -> EigenBasis:
    yk, zk = _eigvec(kappa, q, p)
    v1 = np.array([1.0, yk, zk])
    yw, zw = _eigvec(w, q, p)
    vw = np.array([1.0, yw, zw], dtype=complex)
    v2 = vw.real.copy()
    v3 = vw.imag.copy()
    A = matrix_A0(p) if math.isinf(q) else matrix_A(q, p)
    residual = max(_pair_residual(A, kappa, v1), _pair_residual(A, w, vw))
    return EigenBasis(kappa=kappa, w=w, v1=v1, v2=v2, v3=v3, residual=residual, q=q)


def eig_A0(p: Params) -> EigenBasis:
    """Eigenstructure of the limiting matrix A0.

    The real eigenvalue kappa0 lies in (3/4, 1): the characteristic
    polynomial is 15/64 - lam**(2 beta)/2 < 0 at alpha = 3/4 and exactly
    1/2 at alpha = 1, so the bracket never degenerates.  The complex pair
    follows from the root identities kappa + 2 Re w = 1 and
    kappa |w|**2 = 2 lam**(2 beta).
    """
    lo, hi = 0.75, 1.0
    flo = char_poly_A0(lo, p)
    if not (flo < 0.0):
        raise NumericError(f"characteristic bracket failed at 3/4: chi={flo}")
    kappa = float(brentq(char_poly_A0, lo, hi, args=(p,), xtol=1e-15, rtol=8.9e-16))
    re_w = 0.5 * (1.0 - kappa)
    mod2 = 2.0 * p.lam ** (2.0 * p.beta) / kappa
    im2 = mod2 - re_w**2
    if im2 <= 0.0:
        raise NumericError("complex pair collapsed onto the real axis")
    w = complex(re_w, math.sqrt(im2))
    return _basis_from_roots(kappa, w, math.inf, p)


def _charpoly_coeffs(A: np.ndarray):
    """Coefficients (tr, m2, det) of det(alpha I - A) = alpha**3 - tr alpha**2
    + m2 alpha - det for a 3x3 matrix."""
    tr = A[0, 0] + A[1, 1] + A[2, 2]
    m2 = (
        A[0, 0] * A[1, 1]
        - A[0, 1] * A[1, 0]
        + A[0, 0] * A[2, 2]
        - A[0, 2] * A[2, 0]
        + A[1, 1] * A[2, 2]
        - A[1, 2] * A[2, 1]
    )
    det = np.linalg.det(A)
    return tr, m2, det


def eig_A(q: float, p: Params) -> EigenBasis:
    """Eigenstructure of A(q): exactly one real eigenvalue plus a complex
    conjugate pair is required; three real eigenvalues (which happen at
    small q, where the dissipative diagonal dominates) raise NumericError.

    Eigenvalues come from LAPACK and are polished with two Newton steps on
    the exact characteristic polynomial; eigenvectors are analytic.
    """
    A = matrix_A(q, p)
    vals = np.linalg.eigvals(A)
    imag_mag = np.abs(vals.imag)
    scale = np.max(np.abs(vals)) + 1.0
    real_mask = imag_mag < 1e-9 * scale
    if np.count_nonzero(real_mask) != 1:
        raise NumericError(
            f"A(q={q}) must have one real eigenvalue and a complex pair, "
            f"got eigenvalues {vals}"
        )
    tr, m2, det = _charpoly_coeffs(A)

    def chi(x):
        return ((x - tr) * x + m2) * x - det

    def chi_prime(x):
        return (3.0 * x - 2.0 * tr) * x + m2

    kappa = float(vals[real_mask][0].real)
    for _ in range(2):
        dp = chi_prime(kappa)
        if dp != 0.0:
            kappa -= chi(kappa) / dp
    w = vals[~real_mask]
    w = complex(w[np.argmax(w.imag)])
    if w.imag <= 0.0:
        raise NumericError(f"complex pair of A(q={q}) has no positive-Im member")
    for _ in range(2):
        dp = chi_prime(w)
        if dp != 0.0:
            w -= chi(w) / dp
    return _basis_from_roots(kappa, w, q, p)


def mu_nu(basis0: EigenBasis):
    """Search constants from the limiting basis: mu bounds eigenvector
    norms along the whole search (twice the A0 norm sum), nu bounds the
    leading quadratic coefficient away from zero."""
    mu = 2.0 * (
        np.linalg.norm(basis0.v1)
        + np.linalg.norm(basis0.v2)
        + np.linalg.norm(basis0.v3)
    )
    nu = min(basis0.z3 / 2.0 - basis0.y1 * basis0.y3 / 4.0, 0.5)
    return float(mu), float(nu)


# ---------------------------------------------------------------------------
# the amplification quadratic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RhoQuadratic:
    """Roots of U rho**2 + V rho + W = 0 in decreasing magnitude.

    V and W scale like k = expm(q kappa) and overflow at the interesting q,
    so the scaled coefficients V/k, W/k and the log-magnitude of the large
    root are carried alongside the raw floats (which go to +-inf cleanly).
    """

    U: float
    V: float
    W: float
    rho1: float
    rho2: float
    V_over_k: float
    W_over_k: float
    disc_scaled: float
    log_abs_rho1: float
    rho1_sign: float
    rho1_over_k: float

    @property
    def real_roots(self) -> bool:
        return self.disc_scaled > 0.0


def rho_quadratic(basis: EigenBasis, k: float, a: float, b: float,
                  log_k: float | None = None) -> RhoQuadratic:
    """Quadratic for the amplification factor from the eigenvector geometry.

    With v1 = (1, y1, z1), v2 = (1, y2, z2), v3 = (0, y3, z3):

        U = det [v1 | v2 | v3]
        V = (k - a)(z3 - y1 y3) + b (y1 y2 - y2**2 - y3**2 + z2 - z1)
        W = (a**2 + b**2) y3 - k (a y3 + b y2 - b y1)

    Internally everything is divided by k.  Root extraction splits the
    quadratic Vieta-style so the small root never suffers cancellation,
    and the large root is returned in log form next to the raw float.
    k may be inf when log_k is supplied.
    """
    if log_k is None:
        if not (k > 0) or math.isinf(k):
            raise ValueError("finite positive k required when log_k is absent")
        log_k = math.log(k)
    _, y1, z1 = basis.v1
    _, y2, z2 = basis.v2
    _, y3, z3 = basis.v3
    U = float(np.linalg.det(np.column_stack([basis.v1, basis.v2, basis.v3])))
    if U == 0.0:
        raise ValueError("degenerate eigenvector basis: U = 0")

    with np.errstate(over="ignore", under="ignore"):
        a_k = a * math.exp(-log_k)
        b_k = b * math.exp(-log_k)
        Vt = (1.0 - a_k) * (z3 - y1 * y3) + b_k * (y1 * y2 - y2**2 - y3**2 + z2 - z1)
        Wt = (a**2 + b**2) * math.exp(-log_k) * y3 - (a * y3 + b * y2 - b * y1)
        # quadratic in r = rho/k:  U r**2 + Vt r + c0 = 0
        c0 = Wt * math.exp(-log_k)
        disc = Vt**2 - 4.0 * U * c0
        k_float = math.exp(log_k) if log_k < 709.0 else math.inf
        V = k_float * Vt if Vt != 0.0 else 0.0
        W = k_float * Wt if Wt != 0.0 else 0.0
        if disc <= 0.0:
            return RhoQuadratic(
                U=U, V=V, W=W, rho1=math.nan, rho2=math.nan,
                V_over_k=Vt, W_over_k=Wt, disc_scaled=disc,
                log_abs_rho1=math.nan, rho1_sign=0.0, rho1_over_k=math.nan,
            )
        sq = math.sqrt(disc)
        qq = -0.5 * (Vt + math.copysign(sq, Vt)) if Vt != 0.0 else -0.5 * sq
        r_big = qq / U
        rho2 = Wt / qq  # = k * (c0 / qq), the k cancels exactly
        rho1 = k_float * r_big
        log_abs_rho1 = log_k + math.log(abs(r_big)) if r_big != 0.0 else -math.inf
        rho1_sign = math.copysign(1.0, r_big)
    return RhoQuadratic(
        U=U, V=V, W=W, rho1=float(rho1), rho2=float(rho2),
        V_over_k=float(Vt), W_over_k=float(Wt), disc_scaled=float(disc),
        log_abs_rho1=float(log_abs_rho1), rho1_sign=rho1_sign,
        rho1_over_k=float(r_big),
    )


# ---------------------------------------------------------------------------
# scaled cycle map and its 2x2 block
# ---------------------------------------------------------------------------


def bhat_scaled(basis: EigenBasis, q: float, gamma: float | None = None) -> np.ndarray:
    """Gauge-scaled cycle map expm(q A - gamma I) assembled from the
    eigenstructure: S diag-block S**-1 with the rotation pair expressed in
    the real basis.  Default gauge gamma = q kappa makes the slow direction
    exactly neutral, so every entry is an ordinary float even when expm(qA)
    itself overflows."""
    if gamma is None:
        gamma = q * basis.kappa
    S = np.column_stack([basis.v1, basis.v2, basis.v3])
    with np.errstate(under="ignore"):
        slow = math.exp(q * basis.kappa - gamma)
        rot = np.exp(q * basis.w - gamma)
    ar, br = rot.real, rot.imag
    D = np.array([[slow, 0.0, 0.0], [0.0, ar, br], [0.0, -br, ar]])
    return (S @ D) @ np.linalg.inv(S)


def btilde_block(bhat: np.ndarray) -> np.ndarray:
    """2x2 action on a fresh shell pair: rows (1,2), columns (2,3) of the
    cycle map (0-indexed [[B01, B02], [B11, B12]])."""
    return np.array(
        [[bhat[0, 1], bhat[0, 2]], [bhat[1, 1], bhat[1, 2]]]
    )


def eigenvector_yz(btilde: np.ndarray, rho_scaled: float):
    """Unit eigenvector (y, z) of the 2x2 block for eigenvalue rho_scaled,
    normalized to y**2 + z**2 = 1 with y >= 0 (z > 0 if y = 0)."""
    row1 = np.array([btilde[0, 1], rho_scaled - btilde[0, 0]])
    row2 = np.array([rho_scaled - btilde[1, 1], btilde[1, 0]])
    cand = row1 if np.linalg.norm(row1) >= np.linalg.norm(row2) else row2
    nrm = np.linalg.norm(cand)
    if nrm == 0.0:
        raise NumericError("eigenvector of the 2x2 block is degenerate")
    y, z = cand / nrm
    if y < 0.0 or (y == 0.0 and z < 0.0):
        y, z = -y, -z
    return float(y), float(z)


def block_eigendata(btilde: np.ndarray) -> tuple[float, float, float]:
    """(disc, root_big, root_small) of the characteristic quadratic of a
    real 2x2 block, with the larger-magnitude root extracted from the trace
    (no cancellation) and the smaller from the determinant quotient.
    Non-real pair: disc <= 0 and both roots nan."""
    tr = float(btilde[0, 0] + btilde[1, 1])
    det = float(btilde[0, 0] * btilde[1, 1] - btilde[0, 1] * btilde[1, 0])
    disc = tr * tr - 4.0 * det
    if disc <= 0.0:
        return disc, math.nan, math.nan
    sq = math.sqrt(disc)
    qq = 0.5 * (tr + math.copysign(sq, tr)) if tr != 0.0 else 0.5 * sq
    return disc, qq, det / qq


# ---------------------------------------------------------------------------
# the search
# ---------------------------------------------------------------------------

_CHECK_ORDER = (
    "kappa_in_range",
    "re_w_in_range",
    "im_w_positive",
    "y1_above_half",
    "y3_below_half",
    "z3_above_half",
    "vector_norms_le_mu",
    "nu_margin",
    "k_above_threshold",
    "ab_below_omega_k",
    "omega_small",
    "discriminant_positive",
    "rho_above_threshold",
    "eigen_residual_small",
    "btilde_eigenpair_ok",
)


@dataclass
class SpectralReport:
    """Everything the rest of the pipeline needs about one plateau height q.

    Raw floats that overflow at large q (k, V, W, rho1, rho) are kept as
    +-inf with log-magnitude companions; rho_hat = rho / k is the gauge-
    scaled amplification actually used downstream.
    """

    q: float
    lam: float
    beta: float
    R: float
    basis: EigenBasis
    basis0: EigenBasis
    mu: float
    nu: float
    k: float
    log_k: float
    a: float
    b: float
    omega: float
    log_omega: float
    quad: RhoQuadratic
    rho: float
    log_abs_rho: float
    rho_sign: float
    rho_hat: float
    y: float
    z: float
    bhat: np.ndarray
    btilde: np.ndarray
    checks: dict
    search_trace: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    # convenience mirrors
    @property
    def U(self):
        return self.quad.U

    @property
    def rho1(self):
        return self.quad.rho1

    @property
    def rho2(self):
        return self.quad.rho2

    def to_dict(self) -> dict:
        def safe(x):
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "q": safe(self.q),
            "lam": safe(self.lam),
            "beta": safe(self.beta),
            "R": safe(self.R),
            "kappa": safe(self.basis.kappa),
            "re_w": safe(self.basis.w.real),
            "im_w": safe(self.basis.w.imag),
            "v1": [safe(x) for x in self.basis.v1],
            "v2": [safe(x) for x in self.basis.v2],
            "v3": [safe(x) for x in self.basis.v3],
            "eigen_residual": safe(self.basis.residual),
            "kappa0": safe(self.basis0.kappa),
            "mu": safe(self.mu),
            "nu": safe(self.nu),
            "k": safe(self.k),
            "log_k": safe(self.log_k),
            "a": safe(self.a),
            "b": safe(self.b),
            "omega": safe(self.omega),
            "log_omega": safe(self.log_omega),
            "U": safe(self.quad.U),
            "V": safe(self.quad.V),
            "W": safe(self.quad.W),
            "V_over_k": safe(self.quad.V_over_k),
            "W_over_k": safe(self.quad.W_over_k),
            "disc_scaled": safe(self.quad.disc_scaled),
            "rho1": safe(self.quad.rho1),
            "rho2": safe(self.quad.rho2),
            "rho": safe(self.rho),
            "log_abs_rho": safe(self.log_abs_rho),
            "rho_sign": safe(self.rho_sign),
            "rho_hat": safe(self.rho_hat),
            "y": safe(self.y),
            "z": safe(self.z),
            "bhat": [[safe(x) for x in row] for row in self.bhat],
            "btilde": [[safe(x) for x in row] for row in self.btilde],
            "checks": {name: bool(val) for name, val in self.checks.items()},
            "passed": bool(self.passed),
            "search_trace": list(self.search_trace),
        }


def evaluate_q(q: float, p: Params, R: float | None = None,
               basis0: EigenBasis | None = None) -> SpectralReport:
    """Assemble the full spectral report for one plateau height q,
    evaluating every admissibility check in log space."""
    R = float(p.rho_threshold if R is None else R)
    if not (R > 0):
        raise ValueError("threshold R must be positive")
    basis0 = basis0 or eig_A0(p)
    mu, nu = mu_nu(basis0)
    basis = eig_A(q, p)
    kappa, w = basis.kappa, basis.w

    log_k = q * kappa
    with np.errstate(over="ignore", under="ignore"):
        k = math.exp(log_k) if log_k < 709.0 else math.inf
        # a + i b = expm(q w); |expm(q w)| = expm(q Re w) stays modest in the
        # admissible regime (Re w < 1/8), so these are ordinary floats there.
        exp_re = math.exp(q * w.real)
        a = exp_re * math.cos(q * w.imag)
        b = exp_re * math.sin(q * w.imag)
        log_omega = -5.0 * q / 8.0
        omega = math.exp(log_omega)

    quad = rho_quadratic(basis, k, a, b, log_k=log_k)
    bhat = bhat_scaled(basis, q)
    btilde = btilde_block(bhat)

    norm_sum = (
        np.linalg.norm(basis.v1)
        + np.linalg.norm(basis.v2)
        + np.linalg.norm(basis.v3)
    )
    log_ab = math.log(max(abs(a), abs(b)))
    checks = {
        "kappa_in_range": bool(0.75 < kappa < 1.0),
        "re_w_in_range": bool(0.0 < w.real < 0.125),
        "im_w_positive": bool(w.imag > 0.0),
        "y1_above_half": bool(basis.y1 > basis0.y1 / 2.0),
        "y3_below_half": bool(basis.y3 < basis0.y3 / 2.0),
        "z3_above_half": bool(basis.z3 > basis0.z3 / 2.0),
        "vector_norms_le_mu": bool(norm_sum <= mu),
        "nu_margin": bool(basis.z3 - basis.y1 * basis.y3 >= nu),
        "k_above_threshold": bool(log_k > math.log(5.0 * mu**3 * R / (2.0 * nu))),
        "ab_below_omega_k": bool(log_ab < log_omega + log_k),
        "omega_small": bool(log_omega < 2.0 * math.log(nu) - math.log(100.0) - 4.0 * math.log(mu)),
        "discriminant_positive": bool(quad.disc_scaled > 0.0),
        "rho_above_threshold": bool(quad.real_roots and quad.log_abs_rho1 > math.log(R)),
        "eigen_residual_small": bool(basis.residual <= 1e-10),
    }

    if quad.real_roots:
        rho_hat = quad.rho1_over_k  # rho * expm(-q kappa), the scaled root
        log_abs_rho = quad.log_abs_rho1
        rho_sign = quad.rho1_sign
        rho = quad.rho1
        try:
            y, z = eigenvector_yz(btilde, rho_hat)
            vec = np.array([y, z])
            pair_defect = np.linalg.norm(btilde @ vec - rho_hat * vec)
            checks["btilde_eigenpair_ok"] = bool(pair_defect <= 1e-8 * abs(rho_hat))
        except NumericError:
            y = z = math.nan
            checks["btilde_eigenpair_ok"] = False
    else:
        rho = rho_hat = log_abs_rho = y = z = math.nan
        rho_sign = 0.0
        checks["btilde_eigenpair_ok"] = False

    checks = {name: checks[name] for name in _CHECK_ORDER}
    return SpectralReport(
        q=float(q), lam=p.lam, beta=p.beta, R=R,
        basis=basis, basis0=basis0, mu=mu, nu=nu,
        k=k, log_k=log_k, a=a, b=b, omega=omega, log_omega=log_omega,
        quad=quad, rho=rho, log_abs_rho=log_abs_rho, rho_sign=rho_sign,
        rho_hat=rho_hat, y=y, z=z, bhat=bhat, btilde=btilde, checks=checks,
    )


def find_q(p: Params, R: float | None = None, *, q0: float = 1.0,
           growth: float = 1.25, q_cap: float = 2000.0,
           q: float | None = None) -> SpectralReport:
    """Walk the geometric grid q0 * growth**j until every admissibility
    check passes, and return that q's report (with the failure trace of the
    rejected candidates attached).  A fixed q skips the search and reports
    on that single candidate.  Raises SearchError when the grid is
    exhausted below q_cap."""
    R = float(p.rho_threshold if R is None else R)
    basis0 = eig_A0(p)
    if q is not None:
        report = evaluate_q(q, p, R, basis0)
        return report

    trace = []
    qj = float(q0)
    while qj <= q_cap:
        try:
            report = evaluate_q(qj, p, R, basis0)
        except NumericError:
            trace.append({"q": qj, "first_failed": "eigen_structure"})
        else:
            if report.passed:
                report.search_trace = trace
                return report
            first = next(nm for nm, ok in report.checks.items() if not ok)
            trace.append({"q": qj, "first_failed": first})
        qj *= growth
    raise SearchError(
        f"no admissible q below cap {q_cap} for lam={p.lam}, beta={p.beta}, "
        f"R={R}", trace=trace,
    )
