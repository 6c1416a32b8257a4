"""Closed-form SNR distributions, level crossing rates and supremum bounds.

The supremum bound used throughout is

    P(S* <= s) >= P(S(0) <= s) - T * LCR(s),

which holds for any stationary, mean-square differentiable SNR process
(the expected number of up-crossings dominates the probability of at least
one). It becomes tight in the upper tail.

Correlated LCR
--------------
With ``h = sqrt(beta) Sigma^{1/2} v`` and ``v ~ CN(0, I)``, the SNR is
``S = gbar v^H Sigma v`` and its derivative, conditioned on ``v``, is
``N(0, v^H Q v)`` with ``Q = 4 gbar^2 Sigma^{1/2} B Sigma^{1/2}``. Inverting
the joint characteristic function of ``(S, P = v^H Q v)`` gives

    LCR(s) = 1 / (4 sqrt(2) pi |Q|) * int sum_i A_i g_i^{-3/2} e^{-j t s} dt

where ``g_i(t)`` are the eigenvalues of ``G = Q^{-1} - j t F`` with
``F = gbar Q^{-1/2} Sigma Q^{-1/2}`` and ``A_i = prod_{k != i} 1/(g_k - g_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.linalg import expm
from scipy.stats import ncx2

from .correlation import (
    JAKES_CURVATURE,
    ArrayGeometry,
    ChannelParams,
    CorrelationSet,
    correlation_set,
    spatial_corr,
)
from .numerics import (
    PSD_CLIP_RTOL,
    DomainError,
    QuadratureSpec,
    general_complex_eig,
    hermitian_eig,
    integrate_half_line,
    psd_sqrt,
    regularized_lower_gamma,
)

__all__ = [
    "SigmaEigen",
    "LcrContext",
    "BoundResult",
    "SingularContextError",
    "NumericalRangeError",
    "EigenvalueCollisionError",
    "NumericalFailureError",
    "cdf_snr_fixed_uncorrelated",
    "lcr_uncorrelated",
    "cdf_lower_bound_uncorrelated",
    "sigma_eigen",
    "cdf_snr_fixed_correlated",
    "build_lcr_context",
    "g_eigenvalues",
    "partial_fraction_coeffs",
    "lcr_integrand",
    "lcr_integrand_eigen",
    "lcr_correlated",
    "cdf_lower_bound_correlated",
    "joint_cf",
    "joint_cf_eigen",
    "ccdf_two_point_scalar",
    "UNCORRELATED_LCR_MATCHES_SIMULATION",
]

# The explicit hypoexponential sum cancels like eps / gap^(M-1); at a relative
# gap of 1e-3 its error is ~1e-11, below that the phase-type route is used.
DEGENERACY_RTOL = 1e-3
CONDITION_LIMIT = 1e12
COLLISION_RTOL = 1e-9
CANCELLATION_LIMIT = 1e6
CONTOUR_ANGLE = math.pi / 4

# lcr_uncorrelated keeps the common closed form with s^(2M-1). Its M = 1
# case is half of sqrt(2 pi s) e^{-s} at s = 1, which is what the crossing
# counts of the simulator and lcr_correlated produce.
UNCORRELATED_LCR_MATCHES_SIMULATION = False


class SingularContextError(DomainError):
    pass


class NumericalRangeError(ArithmeticError):
    """An eigenvalue of G left the open right half-plane."""


class EigenvalueCollisionError(ArithmeticError):
    pass


class NumericalFailureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SigmaEigen:
    lambdas: np.ndarray
    basis: np.ndarray
    rank: int

    @property
    def active(self) -> np.ndarray:
        return self.lambdas[: self.rank]


@dataclass(frozen=True)
class LcrContext:
    Q: np.ndarray
    F: np.ndarray
    Q_inv: np.ndarray
    det_Q: float
    sigma: np.ndarray
    sigma_lambdas: np.ndarray
    sigma_basis: np.ndarray
    b_matrix: np.ndarray
    params: ChannelParams
    geometry: ArrayGeometry | None = None

    @property
    def M(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class BoundResult:
    threshold: float
    fixed_cdf_term: float
    lcr_term: float
    movable_length: float

    @property
    def lower_bound_raw(self) -> float:
        return self.fixed_cdf_term - self.movable_length * self.lcr_term

    @property
    def lower_bound_clamped(self) -> float:
        return max(0.0, self.lower_bound_raw)

    @property
    def ccdf_bound(self) -> float:
        return 1.0 - self.lower_bound_raw


# ---------------------------------------------------------------------------
# Uncorrelated branches
# ---------------------------------------------------------------------------

def cdf_snr_fixed_uncorrelated(s_th: float, M: int, params: ChannelParams) -> float:
    if s_th <= 0:
        return 0.0
    return regularized_lower_gamma(M, s_th / params.mean_branch_snr)


def lcr_uncorrelated(s_th: float, M: int, params: ChannelParams,
                     b: float = JAKES_CURVATURE) -> float:
    """Closed-form LCR for M independent branches, with the s^(2M-1) power.

    See ``UNCORRELATED_LCR_MATCHES_SIMULATION``.
    """
    if s_th <= 0:
        return 0.0
    x = s_th / params.mean_branch_snr
    log_val = ((2 * M - 1) * math.log(x) - x + 0.5 * math.log(b)
               - 0.5 * math.log(2 * math.pi) - math.lgamma(M))
    return math.exp(log_val)


def cdf_lower_bound_uncorrelated(s_th: float, geometry: ArrayGeometry,
                                 params: ChannelParams,
                                 b: float = JAKES_CURVATURE) -> BoundResult:
    M = geometry.M
    return BoundResult(s_th, cdf_snr_fixed_uncorrelated(s_th, M, params),
                       lcr_uncorrelated(s_th, M, params, b), geometry.movable_length)


# ---------------------------------------------------------------------------
# Correlated branches: hypoexponential fixed-position SNR
# ---------------------------------------------------------------------------

def sigma_eigen(sigma) -> SigmaEigen:
    lam, u = hermitian_eig(sigma)
    keep = lam > PSD_CLIP_RTOL * lam[0]
    lam = np.where(keep, lam, 0.0)
    return SigmaEigen(lam, u, int(keep.sum()))


def _hypoexp_distinct(s: np.ndarray, lam: np.ndarray) -> np.ndarray:
    total = np.zeros_like(s)
    for i, li in enumerate(lam):
        others = np.delete(lam, i)
        total += np.exp(-s / li) / np.prod(1.0 - others / li)
    return 1.0 - total


def _phase_type_cdf(s: np.ndarray, lam: np.ndarray) -> np.ndarray:
    # chain of exponential phases with rates 1/lam_i, started in phase 0.
    # The generator is conjugated by a Householder reflection first: expm
    # special-cases triangular input with divided differences that cancel
    # when two rates nearly coincide.
    rates = 1.0 / lam
    M = len(lam)
    gen = np.diag(-rates) + np.diag(rates[:-1], 1)
    v = np.full(M, 1.0 / math.sqrt(M))
    v[0] += 1.0
    H = np.eye(M) - 2.0 * np.outer(v, v) / (v @ v)
    dense = H @ gen @ H
    head = H[0]
    row_sums = H @ np.ones(M)
    out = np.empty_like(s)
    for k, sk in enumerate(s):
        out[k] = 1.0 - head @ expm(sk * dense) @ row_sums
    return out


def cdf_snr_fixed_correlated(s_th, eig: SigmaEigen, params: ChannelParams):
    """CDF of gbar * sum_i lambda_i |u_i|^2 (hypoexponential)."""
    s = np.atleast_1d(np.asarray(s_th, dtype=float))
    lam = params.mean_branch_snr * eig.active
    pos = np.maximum(s, 0.0)
    gaps = np.abs(lam[:, None] - lam[None, :])[np.triu_indices(len(lam), 1)]
    if gaps.size == 0 or gaps.min() >= DEGENERACY_RTOL * lam.max():
        out = _hypoexp_distinct(pos, lam)
    else:
        out = _phase_type_cdf(pos, lam)
    out = np.where(s <= 0, 0.0, np.clip(out, 0.0, 1.0))
    return float(out[0]) if np.ndim(s_th) == 0 else out


# ---------------------------------------------------------------------------
# Correlated branches: level crossing rate
# ---------------------------------------------------------------------------

def build_lcr_context(geometry: ArrayGeometry | CorrelationSet,
                      params: ChannelParams = ChannelParams()) -> LcrContext:
    if isinstance(geometry, CorrelationSet):
        cs, geom = geometry, geometry.geometry
    else:
        cs, geom = correlation_set(geometry), geometry
    gbar = params.mean_branch_snr
    root = psd_sqrt(cs.sigma)
    Q = 4.0 * gbar ** 2 * root @ cs.b_matrix @ root
    Q = 0.5 * (Q + Q.conj().T).real
    w, u = hermitian_eig(Q)
    if w[-1] <= 0 or w[0] / w[-1] > CONDITION_LIMIT:
        raise SingularContextError(f"Q is numerically singular (eigenvalues {w[-1]:.3g}..{w[0]:.3g})")
    q_inv_root = (u / np.sqrt(w)) @ u.T
    F = gbar * q_inv_root @ cs.sigma @ q_inv_root
    Q_inv = (u / w) @ u.T
    lam, basis = hermitian_eig(cs.sigma)
    return LcrContext(Q=Q, F=0.5 * (F + F.T), Q_inv=0.5 * (Q_inv + Q_inv.T),
                      det_Q=float(np.prod(w)), sigma=np.asarray(cs.sigma, dtype=float),
                      sigma_lambdas=np.maximum(lam, 0.0), sigma_basis=basis.real,
                      b_matrix=np.asarray(cs.b_matrix, dtype=float),
                      params=params, geometry=geom)


def _g_matrix(ctx: LcrContext, t) -> np.ndarray:
    t = np.asarray(t, dtype=complex)
    return ctx.Q_inv[None] - 1j * t.reshape(-1, 1, 1) * ctx.F[None]


def g_eigenvalues(ctx: LcrContext, t1: float) -> np.ndarray:
    """Eigenvalues of G(t1) = Q^{-1} - j t1 F for real t1."""
    g = general_complex_eig(_g_matrix(ctx, t1)[0])
    if np.any(g.real <= 0):
        raise NumericalRangeError(f"eigenvalue of G({t1}) with non-positive real part")
    return g


def partial_fraction_coeffs(g) -> np.ndarray:
    """A_i = prod_{k != i} 1 / (g_k - g_i)."""
    g = np.asarray(g, dtype=complex)
    M = g.size
    diff = g[None, :] - g[:, None]
    idx = np.arange(M)
    diff[idx, idx] = 1.0
    mask = ~np.eye(M, dtype=bool)
    scale = np.maximum(np.abs(g)[:, None], np.abs(g)[None, :])[mask]
    off = np.abs(diff[mask]) / np.where(scale > 0, scale, 1.0)
    if off.size and off.min() <= COLLISION_RTOL:
        raise EigenvalueCollisionError("eigenvalues of G coincide")
    return 1.0 / np.prod(diff, axis=1)


def _upper_sqrt(J: np.ndarray) -> np.ndarray:
    # principal square root of an upper-triangular matrix, column by column
    n = J.shape[0]
    R = np.zeros_like(J)
    for j in range(n):
        R[j, j] = np.sqrt(J[j, j])
        for i in range(j - 1, -1, -1):
            acc = R[i, i + 1:j] @ R[i + 1:j, j]
            R[i, j] = (J[i, j] - acc) / (R[i, i] + R[j, j])
    return R


def _confluent_sum(q: np.ndarray) -> complex:
    """Divided difference of x^{M - 1/2} at the points q, repeats allowed.

    Read off the top-right corner of the matrix function applied to the
    bidiagonal matrix with the q_i on its diagonal.
    """
    M = q.size
    J = np.diag(q.astype(complex)) + np.diag(np.ones(M - 1, dtype=complex), 1)
    out = _upper_sqrt(J)
    for _ in range(M - 1):
        out = J @ out
    return complex(out[0, -1])


def _reciprocal_eigs(ctx: LcrContext, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # q_i = 1 / g_i are the eigenvalues of K^{-1/2} Q K^{-1/2}, K = I - j t gbar Sigma
    gbar = ctx.params.mean_branch_snr
    k_diag = 1.0 - 1j * t[:, None] * gbar * ctx.sigma_lambdas[None, :]
    W = ctx.sigma_basis[None, :, :] * k_diag[:, None, :] ** -0.5
    H = np.swapaxes(W, 1, 2) @ ctx.Q[None] @ W
    return general_complex_eig(H), np.prod(k_diag, axis=1)


def _explicit_sum(q: np.ndarray):
    # q: (n, M) -> sum_i q_i^{M-1/2} / prod_{k != i} (q_i - q_k), magnitudes, min pair gap
    M = q.shape[1]
    diff = q[:, :, None] - q[:, None, :]
    idx = np.arange(M)
    diff[:, idx, idx] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = q ** (M - 1) * np.sqrt(q) / np.prod(diff, axis=2)
    if M > 1:
        scale = np.maximum(np.abs(q)[:, :, None], np.abs(q)[:, None, :])
        rel = np.abs(diff) / np.where(scale > 0, scale, 1.0)
        rel[:, idx, idx] = np.inf
        gap = rel.reshape(q.shape[0], -1).min(axis=1)
    else:
        gap = np.full(q.shape[0], np.inf)
    return terms.sum(axis=1), np.abs(terms).sum(axis=1), gap


def lcr_integrand(ctx: LcrContext, t) -> np.ndarray:
    """sum_i A_i g_i(t)^{-3/2} / (4 sqrt(2) pi |Q|), for real or complex t.

    Evaluated through q_i = 1/g_i, using the identity

        A_i g_i^{-3/2} / |Q| = q_i^{M-1/2} / (det K prod_{k != i} (q_i - q_k)),

    which never forms Q^{-1} and stays accurate when Q is ill-conditioned.
    Nodes where eigenvalues collide are nudged by 1e-7 (1 + |t|) up to three
    times; if that fails, or the explicit sum cancels badly, the confluent
    divided-difference form is used instead.
    """
    t = np.atleast_1d(np.asarray(t, dtype=complex))
    q, det_k = _reciprocal_eigs(ctx, t)
    val, mag, gap = _explicit_sum(q)
    bad = gap <= COLLISION_RTOL
    for attempt in range(1, 4):
        if not np.any(bad):
            break
        idx = np.flatnonzero(bad)
        tb = t[idx]
        direction = np.where(np.abs(tb) > 0, tb / np.maximum(np.abs(tb), 1e-300), 1.0)
        tn = tb + attempt * 1e-7 * (1.0 + np.abs(tb)) * direction
        qn, dn = _reciprocal_eigs(ctx, tn)
        vn, mn, gn = _explicit_sum(qn)
        ok = gn > COLLISION_RTOL
        val[idx[ok]], mag[idx[ok]], det_k[idx[ok]] = vn[ok], mn[ok], dn[ok]
        bad[idx[ok]] = False
    bad |= ~np.isfinite(val) | (mag > CANCELLATION_LIMIT * np.abs(val))
    for i in np.flatnonzero(bad):
        val[i] = _confluent_sum(q[i])
    return val / (4.0 * math.sqrt(2.0) * math.pi * det_k)


def lcr_integrand_eigen(ctx: LcrContext, t) -> np.ndarray:
    """The same integrand straight from the eigenvalues of G and the A_i.

    Only well conditioned for moderate cond(Q); used as a cross-check.
    """
    out = []
    for tk in np.atleast_1d(np.asarray(t, dtype=complex)):
        g = general_complex_eig(_g_matrix(ctx, tk)[0])
        out.append(np.sum(partial_fraction_coeffs(g) * g ** -1.5))
    return np.array(out) / (4.0 * math.sqrt(2.0) * math.pi * ctx.det_Q)


def lcr_correlated(s_th: float, ctx: LcrContext, spec: QuadratureSpec = QuadratureSpec(),
                   method: str = "contour") -> float:
    """Level crossing rate of the SNR process at ``s_th`` (crossings per wavelength).

    ``method="contour"`` integrates along the ray t = r e^{-j pi/4} in the lower
    half-plane, where the integrand is analytic and e^{-jts} decays
    exponentially. ``method="real_line"`` integrates over the real axis,
    with half-period panels and epsilon extrapolation for the oscillatory tail.
    Both use the symmetry f(-t) = conj(f(t)) of the integrand.
    """
    if s_th <= 0:
        return 0.0
    if method == "contour":
        rot = complex(math.cos(CONTOUR_ANGLE), -math.sin(CONTOUR_ANGLE))

        def f(r):
            t = np.asarray(r) * rot
            return lcr_integrand(ctx, t) * np.exp(-1j * t * s_th) * rot

        half, _ = integrate_half_line(f, spec, first_width=min(1.0, 4.0 / s_th))
    elif method == "real_line":
        def f(t):
            t = np.asarray(t, dtype=float)
            return lcr_integrand(ctx, t) * np.exp(-1j * t * s_th)

        head = max(40.0 * math.pi / s_th, 50.0)
        half, _ = integrate_half_line(f, spec, first_width=head, oscillation=s_th)
    else:
        raise ValueError(f"unknown method {method!r}")
    value = 2.0 * half.real
    if value < -spec.abs_tol:
        raise NumericalFailureError(f"negative crossing rate {value:.3g} at s={s_th}")
    return max(0.0, value)


def cdf_lower_bound_correlated(s_th: float, geometry: ArrayGeometry,
                               params: ChannelParams = ChannelParams(),
                               spec: QuadratureSpec = QuadratureSpec(),
                               ctx: LcrContext | None = None,
                               eig: SigmaEigen | None = None) -> BoundResult:
    if eig is None:
        eig = sigma_eigen(correlation_set(geometry).sigma)
    fixed = cdf_snr_fixed_correlated(s_th, eig, params)
    T = geometry.movable_length
    if T == 0:
        return BoundResult(s_th, fixed, 0.0, 0.0)
    if ctx is None:
        ctx = build_lcr_context(geometry, params)
    return BoundResult(s_th, fixed, lcr_correlated(s_th, ctx, spec), T)


def ccdf_two_point_scalar(s_th: float, T: float,
                          params: ChannelParams = ChannelParams()) -> float:
    """P(max(S(0), S(T)) > s) for a single antenna.

    Any finite set of positions gives a lower bound on the supremum ccdf.
    Conditioned on h(0), h(T) is CN(rho h(0), 1 - rho^2) in units of beta, so
    the second term is a non-central chi-square tail. Both terms are
    positive, which keeps deep-tail values accurate.
    """
    if s_th <= 0:
        return 1.0
    x_max = s_th / params.mean_branch_snr
    rho2 = float(spatial_corr(T)) ** 2
    if rho2 >= 1.0 - 1e-15:
        return math.exp(-x_max)
    scale = 2.0 / (1.0 - rho2)

    def joint(x):
        return math.exp(-x) * ncx2.sf(scale * x_max, 2, scale * rho2 * x)

    extra, _ = integrate.quad(joint, 0.0, x_max, epsabs=0.0, epsrel=1e-10, limit=200)
    return math.exp(-x_max) + extra


# ---------------------------------------------------------------------------
# Joint characteristic function of (S, P)
# ---------------------------------------------------------------------------

def joint_cf(ctx: LcrContext, t1: float, t2: float) -> complex:
    """E[exp(j t1 S + j t2 P)] with S = gbar v^H Sigma v, P = v^H Q v.

    Evaluated as 1 / det(I - j t1 gbar Sigma - j t2 Q), which is
    |Q|^{-1} prod_i (g_i(t1) - j t2)^{-1} after a similarity transform.
    """
    gbar = ctx.params.mean_branch_snr
    M = ctx.M
    mat = np.eye(M) - 1j * t1 * gbar * ctx.sigma - 1j * t2 * ctx.Q
    return complex(1.0 / np.linalg.det(mat))


def joint_cf_eigen(ctx: LcrContext, t1: float, t2: float) -> complex:
    g = general_complex_eig(_g_matrix(ctx, t1)[0])
    return complex(1.0 / (ctx.det_Q * np.prod(g - 1j * t2)))
