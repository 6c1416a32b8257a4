"""Special functions, eigen-solvers and adaptive quadrature.

Everything here is a pure function of its inputs. Bessel functions and the
incomplete gamma function are evaluated in-house; dense linear algebra is
delegated to LAPACK through numpy.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "ConvergenceError",
    "NotPSDError",
    "QuadratureSpec",
    "bessel_j0",
    "bessel_j1",
    "regularized_lower_gamma",
    "gauss_kronrod",
    "integrate_interval",
    "integrate_half_line",
    "integrate_real_line",
    "hermitian_eig",
    "general_complex_eig",
    "psd_sqrt",
    "PSD_CLIP_RTOL",
]

PSD_CLIP_RTOL = 1e-10


class DomainError(ValueError):
    """Argument outside the domain of a numerical routine."""


class NotPSDError(DomainError):
    pass


class ConvergenceError(RuntimeError):
    """Quadrature ran out of budget. Carries the best estimate so far."""

    def __init__(self, message: str, estimate: complex, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error={error:.3g})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_panels: int = 4096
    truncation_threshold: float = 1e-12

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.truncation_threshold > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_panels < 1:
            raise DomainError("max_panels must be >= 1")

    def target(self, value: complex) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


# ---------------------------------------------------------------------------
# Bessel functions of the first kind, orders 0 and 1
# ---------------------------------------------------------------------------

_SERIES_MAX = 8.0
_ASYMPTOTIC_MIN = 25.0
_SERIES_TERMS = 48


def _check_finite(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Bessel functions need finite arguments")
    return arr


def _series(ax: np.ndarray, order: int) -> np.ndarray:
    # sum_k (-1)^k (x/2)^(2k+order) / (k! (k+order)!), evaluated by nested products
    q = -(ax * ax) / 4.0
    out = np.ones_like(ax)
    for k in range(_SERIES_TERMS, 0, -1):
        out = 1.0 + out * q / (k * (k + order))
    if order == 1:
        out = out * ax / 2.0
    return out


def _miller(ax: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """J0 and J1 by backward recurrence, normalised with J0 + 2*sum J_2k = 1."""
    start = 2 * int((ax.max() + 60.0) / 2.0)
    j_next = np.zeros_like(ax)
    j_cur = np.full_like(ax, 1e-300)
    norm = np.zeros_like(ax)
    j1 = np.zeros_like(ax)
    for k in range(start, 0, -1):
        j_prev = (2.0 * k / ax) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j_cur
        if k - 1 == 1:
            j1 = j_cur.copy()
        big = np.abs(j_cur) > 1e250
        if np.any(big):
            scale = np.where(big, 1e-250, 1.0)
            j_cur *= scale
            j_next *= scale
            norm *= scale
            j1 *= scale
    norm += j_cur
    return j_cur / norm, j1 / norm


def _hankel(ax: np.ndarray, order: int) -> np.ndarray:
    mu = 4.0 * order * order
    p = np.ones_like(ax)
    q = np.zeros_like(ax)
    term = np.ones_like(ax)
    z8 = 8.0 * ax
    for k in range(1, 40):
        term = term * (mu - (2 * k - 1) ** 2) / (k * z8)
        if k % 2 == 1:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += -term if (k // 2) % 2 == 1 else term
        if np.all(np.abs(term) < 1e-17):
            break
    chi = ax - (0.5 * order + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * ax)) * (p * np.cos(chi) - q * np.sin(chi))


def _bessel(x, order: int):
    arr = _check_finite(x)
    ax = np.abs(arr)
    out = np.empty_like(ax)
    lo = ax <= _SERIES_MAX
    hi = ax >= _ASYMPTOTIC_MIN
    mid = ~(lo | hi)
    if np.any(lo):
        out[lo] = _series(ax[lo], order)
    if np.any(mid):
        j0, j1 = _miller(ax[mid])
        out[mid] = j0 if order == 0 else j1
    if np.any(hi):
        out[hi] = _hankel(ax[hi], order)
    if order == 1:
        out = np.where(arr < 0, -out, out)
    return out if out.ndim else float(out)


def bessel_j0(x):
    """J0 of a real scalar or array (absolute error below 1e-12 for |x| <= 500)."""
    return _bessel(x, 0)


def bessel_j1(x):
    """J1 of a real scalar or array."""
    return _bessel(x, 1)


def regularized_lower_gamma(m: int, x: float) -> float:
    """P(m, x) = gamma(m, x) / Gamma(m) for integer shape m >= 1."""
    if int(m) != m or m < 1:
        raise DomainError("shape must be a positive integer")
    if x < 0:
        raise DomainError("x must be non-negative")
    m = int(m)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < m + 1:
        # tail of the Poisson sum, no cancellation below the mode
        term = math.exp(-x + m * math.log(x) - math.lgamma(m + 1))
        total = 0.0
        k = m
        while term > 1e-17 * total or total == 0.0:
            total += term
            k += 1
            term *= x / k
            if term == 0.0:
                break
        return min(1.0, total)
    term = math.exp(-x)
    upper = 0.0
    for k in range(m):
        upper += term
        term *= x / (k + 1)
    return max(0.0, 1.0 - upper)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG7 = np.zeros(15)
_WG7[[1, 3, 5]] = _WG[:3]
_WG7[7] = _WG[3]
_WG7[[9, 11, 13]] = _WG[2::-1]


def gauss_kronrod(f: Callable, a: float, b: float) -> tuple[complex, float]:
    """15-point Kronrod estimate on [a, b] with the QUADPACK error heuristic.

    ``f`` is called once with an array of the 15 nodes.
    """
    half = 0.5 * (b - a)
    centre = 0.5 * (a + b)
    vals = np.asarray(f(centre + half * _NODES))
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"integrand not finite on [{a}, {b}]")
    kron = half * np.dot(_WK15, vals)
    gauss = half * np.dot(_WG7, vals)
    mean = kron / (2.0 * half) if half else 0.0
    resasc = abs(half) * np.dot(_WK15, np.abs(vals - mean))
    err = abs(kron - gauss)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    return complex(kron), float(err)


class _Pool:
    """Global adaptive bisection over a growing set of panels."""

    def __init__(self, f, spec: QuadratureSpec):
        self.f = f
        self.spec = spec
        self.heap: list = []
        self.value = 0j
        self.error = 0.0
        self.panels = 0
        self._tie = 0

    def _push(self, a, b, val, err):
        self._tie += 1
        heapq.heappush(self.heap, (-err, self._tie, a, b, val))

    def add(self, a: float, b: float) -> tuple[complex, float]:
        val, err = gauss_kronrod(self.f, a, b)
        self.panels += 1
        self._push(a, b, val, err)
        self.value += val
        self.error += err
        return val, err

    def _split_worst(self):
        neg_err, _, a, b, val = heapq.heappop(self.heap)
        m = 0.5 * (a + b)
        v1, e1 = gauss_kronrod(self.f, a, m)
        v2, e2 = gauss_kronrod(self.f, m, b)
        self.panels += 1
        self._push(a, m, v1, e1)
        self._push(m, b, v2, e2)
        self.value += v1 + v2 - val
        self.error += e1 + e2 + neg_err

    def refine(self, tol: Callable[[complex], float]) -> None:
        while self.error > tol(self.value):
            if self.panels >= self.spec.max_panels:
                raise ConvergenceError("panel budget exhausted", self.value, self.error)
            self._split_worst()
        # running sums drift; recompute from the leaves
        self.value = sum(item[4] for item in self.heap)

    def segment(self, a: float, b: float, tol: float) -> complex:
        """Integrate [a, b] on its own to ``tol`` and merge it into the pool."""
        sub = _Pool(self.f, QuadratureSpec(self.spec.abs_tol, self.spec.rel_tol,
                                           max(1, self.spec.max_panels - self.panels),
                                           self.spec.truncation_threshold))
        sub.add(a, b)
        sub.refine(lambda v: tol)
        for item in sub.heap:
            self._tie += 1
            heapq.heappush(self.heap, (item[0], self._tie) + item[2:])
        self.panels += sub.panels
        self.value += sub.value
        self.error += sub.error
        return sub.value


def integrate_interval(f: Callable, a: float, b: float,
                       spec: QuadratureSpec = QuadratureSpec()) -> tuple[complex, float]:
    pool = _Pool(f, spec)
    pool.add(a, b)
    pool.refine(spec.target)
    return pool.value, pool.error


def _wynn_epsilon(partials: list[complex]) -> tuple[complex, float]:
    """Limit of a partial-sum sequence by Wynn's epsilon algorithm."""
    n = len(partials)
    prev = [0j] * (n + 1)
    cur = list(partials)
    best, best_err = partials[-1], abs(partials[-1] - partials[-2]) if n > 1 else math.inf
    col = 0
    while len(cur) > 1:
        nxt = []
        for i in range(len(cur) - 1):
            diff = cur[i + 1] - cur[i]
            if diff == 0:
                nxt.append(complex(math.inf))
            else:
                nxt.append(prev[i + 1] + 1.0 / diff)
        prev, cur = cur, nxt
        col += 1
        if col % 2 == 0 and len(cur) >= 2 and all(map(np.isfinite, cur[-2:])):
            err = abs(cur[-1] - cur[-2])
            if err < best_err:
                best, best_err = cur[-1], err
    return best, best_err


def integrate_half_line(f: Callable, spec: QuadratureSpec = QuadratureSpec(),
                        start: float = 0.0, first_width: float = 1.0,
                        oscillation: float | None = None) -> tuple[complex, float]:
    """Integral of ``f`` over [start, inf).

    Panels double in width until three consecutive panels each contribute
    less than ``spec.truncation_threshold``. With ``oscillation=omega`` the
    panels beyond ``start + first_width`` are half-periods pi/omega and the
    partial sums are extrapolated with the epsilon algorithm, which handles
    slowly decaying Fourier-type integrands.
    """
    if first_width <= 0:
        raise DomainError("first_width must be positive")
    pool = _Pool(f, spec)
    local_tol = min(spec.abs_tol, spec.truncation_threshold) if oscillation else None

    if oscillation is None:
        a, width, quiet = start, first_width, 0
        while quiet < 3:
            b = a + width
            tol = max(0.25 * spec.truncation_threshold, 0.1 * spec.target(pool.value))
            val = pool.segment(a, b, tol)
            quiet = quiet + 1 if abs(val) < spec.truncation_threshold else 0
            a, width = b, 2.0 * width
            if pool.panels >= spec.max_panels:
                raise ConvergenceError("tail did not decay within budget", pool.value, pool.error)
        pool.refine(spec.target)
        return pool.value, pool.error

    if oscillation <= 0:
        raise DomainError("oscillation frequency must be positive")
    head = pool.segment(start, start + first_width, 0.1 * spec.abs_tol)
    step = math.pi / oscillation
    partials = [head]
    a = start + first_width
    estimate, previous, settled = head, None, 0
    while True:
        val = pool.segment(a, a + step, local_tol)
        partials.append(partials[-1] + val)
        a += step
        if len(partials) >= 8:
            estimate, est_err = _wynn_epsilon(partials[-min(len(partials), 40):])
            tol = spec.target(estimate)
            if previous is not None and abs(estimate - previous) <= tol and est_err <= tol:
                settled += 1
                if settled >= 2:
                    return estimate, max(est_err, abs(estimate - previous)) + pool.error
            else:
                settled = 0
            previous = estimate
        if pool.panels >= spec.max_panels:
            raise ConvergenceError("oscillatory tail did not converge", estimate, pool.error)


def integrate_real_line(f: Callable, spec: QuadratureSpec = QuadratureSpec(),
                        hermitian: bool = False, oscillation: float | None = None,
                        first_width: float = 1.0) -> complex:
    """Integral of a complex integrand over the whole real line.

    ``hermitian=True`` declares f(-t) == conj(f(t)); only [0, inf) is
    evaluated and the returned value is real.
    """
    kw = dict(first_width=first_width, oscillation=oscillation)
    right, _ = integrate_half_line(f, spec, **kw)
    if hermitian:
        return complex(2.0 * right.real, 0.0)
    left, _ = integrate_half_line(lambda t: f(-np.asarray(t)), spec, **kw)
    return right + left


# ---------------------------------------------------------------------------
# Eigen-solvers
# ---------------------------------------------------------------------------

def _square(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DomainError("expected a square matrix")
    if not np.all(np.isfinite(arr)):
        raise DomainError("matrix has non-finite entries")
    return arr


def hermitian_eig(a, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and unitary eigenvectors of a Hermitian matrix."""
    arr = _square(a)
    scale = max(1.0, float(np.max(np.abs(arr))))
    if np.max(np.abs(arr - arr.conj().T)) > tol * scale:
        raise DomainError("matrix is not Hermitian")
    w, u = np.linalg.eigh(0.5 * (arr + arr.conj().T))
    return w[::-1].copy(), u[:, ::-1].copy()


def general_complex_eig(a) -> np.ndarray:
    """Eigenvalues of a general complex matrix, or of a stack of matrices."""
    arr = np.asarray(a)
    if not np.all(np.isfinite(arr)):
        raise DomainError("matrix has non-finite entries")
    return np.linalg.eigvals(arr)


def psd_sqrt(a, rtol: float = PSD_CLIP_RTOL) -> np.ndarray:
    """Principal square root of a numerically PSD Hermitian matrix."""
    w, u = hermitian_eig(a)
    top = max(abs(w[0]), abs(w[-1]))
    if w[-1] < -rtol * top:
        raise NotPSDError(f"eigenvalue {w[-1]:.3g} below clip threshold")
    w = np.where(w < rtol * top, 0.0, w)
    root = (u * np.sqrt(w)) @ u.conj().T
    return 0.5 * (root + root.conj().T)
