"""Monte Carlo simulator of the correlated channel field along the motion axis.

The stacked channel vector over a position grid is drawn as ``L z`` with
``C ~= L L^T`` (C is the real Jakes grid covariance) and ``z`` circular
complex standard normal. Realization ``r`` always consumes its own Philox
stream keyed by ``(seed, r)``, so results do not depend on batching or on
how many worker threads are used.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .correlation import (
    ArrayGeometry,
    ChannelParams,
    _check_grid,
    spatial_corr,
    stacked_coordinates,
)
from .numerics import DomainError, hermitian_eig

__all__ = [
    "SimConfig",
    "GridFactor",
    "FieldRealization",
    "EmpiricalStats",
    "IllConditionedGridError",
    "THREADS_ENV",
    "simulation_grid",
    "factorize_grid_covariance",
    "factorize_grid",
    "realization_rng",
    "sample_field",
    "snr_traces",
    "channel_traces",
    "iter_snr_batches",
    "count_upcrossings",
    "empirical_lcr",
    "empirical_sup_cdf",
    "wilson_interval",
    "simulate_stats",
    "mc_joint_cf",
    "mc_sdot_variance",
    "sdot_variance_trace",
    "resolve_threads",
    "dump_traces",
]

THREADS_ENV = "MOVARRAY_THREADS"
_CLIP_LIMIT = 1e-3


class IllConditionedGridError(DomainError):
    pass


@dataclass(frozen=True)
class SimConfig:
    grid_points: int = 2048
    realizations: int = 10_000
    seed: int = 0
    batch_size: int = 256

    def __post_init__(self):
        if self.grid_points < 1 or self.realizations < 1 or self.batch_size < 1:
            raise DomainError("grid_points, realizations and batch_size must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    def grid_spacing(self, T: float) -> float:
        return T / (self.grid_points - 1) if self.grid_points > 1 else 0.0


@dataclass(frozen=True)
class GridFactor:
    """Low-rank factor of a grid covariance.

    Rows are ordered position-major (``k * elements + i``). ``copies`` > 1
    means each realization uses that many independent draws of the field,
    which is how uncorrelated branches are simulated.
    """

    L: np.ndarray
    num_positions: int
    num_elements: int
    clipped_mass: float = 0.0
    copies: int = 1

    @property
    def rank(self) -> int:
        return self.L.shape[1]

    @property
    def branches(self) -> int:
        return self.num_elements * self.copies


@dataclass
class FieldRealization:
    positions: np.ndarray
    h: np.ndarray       # (M, N) complex
    snr: np.ndarray     # (N,)


@dataclass
class EmpiricalStats:
    thresholds: np.ndarray
    sup_samples: np.ndarray        # (R,)
    start_samples: np.ndarray      # (R,) SNR at t = 0
    crossing_counts: np.ndarray    # (R, K)
    variation: np.ndarray          # (R,) total positive variation of S on the grid
    movable_length: float

    @property
    def realizations(self) -> int:
        return self.sup_samples.size

    def lcr(self) -> tuple[np.ndarray, np.ndarray]:
        return empirical_lcr(self.crossing_counts, None, self.movable_length)

    def sup_cdf(self, thresholds=None, confidence: float = 0.95):
        th = self.thresholds if thresholds is None else thresholds
        return empirical_sup_cdf(self.sup_samples, th, confidence)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


def simulation_grid(geometry: ArrayGeometry, grid_points: int) -> np.ndarray:
    T = geometry.movable_length
    if T == 0 or grid_points == 1:
        return np.zeros(1)
    return np.linspace(0.0, T, grid_points)


# ---------------------------------------------------------------------------
# Factorization
# ---------------------------------------------------------------------------

def factorize_grid_covariance(C, num_elements: int = 1, rtol: float = 1e-14) -> GridFactor:
    """Eigen-factor L of a dense grid covariance, negative eigenvalues clipped."""
    C = np.asarray(C, dtype=float)
    w, u = hermitian_eig(C, tol=1e-9)
    trace = float(np.trace(C))
    clipped = float(-w[w < 0].sum())
    if clipped > _CLIP_LIMIT * trace:
        raise IllConditionedGridError(f"clipped eigenvalue mass {clipped:.3g} exceeds limit")
    keep = w > rtol * w[0]
    L = u[:, keep] * np.sqrt(w[keep])
    n = C.shape[0]
    if n % num_elements:
        raise DomainError("matrix size is not a multiple of num_elements")
    return GridFactor(L, n // num_elements, num_elements, clipped)


def factorize_grid(geometry: ArrayGeometry, grid, tol: float = 1e-12,
                   max_rank: int | None = None) -> GridFactor:
    """Pivoted Cholesky factor of the grid covariance, built column by column.

    The Jakes field is band-limited, so the covariance has small numerical
    rank and the full (MN x MN) matrix is never formed. Stops once the
    residual trace is below ``tol * trace``; the residual is PSD, so this also
    bounds its Frobenius norm.
    """
    grid = _check_grid(grid)
    t, y = stacked_coordinates(geometry, grid)
    n = t.size
    max_rank = n if max_rank is None else min(n, max_rank)
    diag = np.ones(n)
    L = np.zeros((n, min(n, 64)))
    k = 0
    while k < max_rank and diag.sum() > tol * n:
        p = int(np.argmax(diag))
        if k == L.shape[1]:
            L = np.hstack([L, np.zeros((n, L.shape[1]))])
        col = spatial_corr(np.hypot(t - t[p], y - y[p]))
        col = col - L[:, :k] @ L[p, :k]
        L[:, k] = col / math.sqrt(diag[p])
        diag = np.maximum(diag - L[:, k] ** 2, 0.0)
        diag[p] = 0.0
        k += 1
    return GridFactor(L[:, :k].copy(), grid.size, geometry.M, float(diag.sum()))


def _factor_for(geometry: ArrayGeometry, sim: SimConfig, independent: bool) -> GridFactor:
    grid = simulation_grid(geometry, sim.grid_points)
    if independent:
        single = ArrayGeometry(1, 0.0, geometry.movable_length)
        f = factorize_grid(single, grid)
        return GridFactor(f.L, f.num_positions, 1, f.clipped_mass, copies=geometry.M)
    return factorize_grid(geometry, grid)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def realization_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) + (int(index) << 64)))


def _normals(factor: GridFactor, seed: int, start: int, count: int) -> np.ndarray:
    width = factor.rank * factor.copies
    z = np.empty((factor.rank, count * factor.copies), dtype=complex)
    for j in range(count):
        draw = realization_rng(seed, start + j).standard_normal((2, width))
        cols = (draw[0] + 1j * draw[1]) * math.sqrt(0.5)
        z[:, j * factor.copies:(j + 1) * factor.copies] = cols.reshape(factor.copies, factor.rank).T
    return z


def channel_traces(factor: GridFactor, params: ChannelParams, seed: int, start: int,
              count: int) -> np.ndarray:
    # (count, N, branches) complex
    z = _normals(factor, seed, start, count)
    h = (factor.L @ z) * math.sqrt(params.beta)
    N, m, c = factor.num_positions, factor.num_elements, factor.copies
    h = h.reshape(N, m, count, c).transpose(2, 0, 3, 1)
    return h.reshape(count, N, c * m)


def snr_traces(factor: GridFactor, params: ChannelParams, seed: int, start: int,
               count: int) -> np.ndarray:
    """SNR traces S(t_k) of realizations start .. start+count-1, shape (count, N)."""
    h = channel_traces(factor, params, seed, start, count)
    return (params.symbol_energy / params.noise_var) * np.sum(h.real ** 2 + h.imag ** 2, axis=2)


def sample_field(factor: GridFactor, params: ChannelParams, seed: int, index: int,
                 positions=None) -> FieldRealization:
    h = channel_traces(factor, params, seed, index, 1)[0].T
    snr = (params.symbol_energy / params.noise_var) * np.sum(np.abs(h) ** 2, axis=0)
    if positions is None:
        positions = np.arange(factor.num_positions, dtype=float)
    return FieldRealization(np.asarray(positions, dtype=float), h, snr)


def iter_snr_batches(factor: GridFactor, params: ChannelParams, sim: SimConfig,
                     threads: int | None = None):
    """Yield (start, traces) in realization order; deterministic for any thread count."""
    starts = range(0, sim.realizations, sim.batch_size)

    def job(start):
        return start, snr_traces(factor, params, sim.seed, start,
                                 min(sim.batch_size, sim.realizations - start))

    n = resolve_threads(threads)
    if n == 1:
        for s in starts:
            yield job(s)
        return
    with ThreadPoolExecutor(max_workers=n) as pool:
        # bounded look-ahead keeps memory flat
        pending = []
        for s in starts:
            pending.append(pool.submit(job, s))
            if len(pending) >= 2 * n:
                yield pending.pop(0).result()
        for fut in pending:
            yield fut.result()


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def count_upcrossings(S, s_th):
    """Number of k with S[k] <= s_th < S[k+1].

    ``S`` may be a trace (N,) or a batch (R, N); ``s_th`` a scalar or an
    array of K thresholds, giving shape (..., K).
    """
    S = np.asarray(S, dtype=float)
    th = np.asarray(s_th, dtype=float)
    lo, hi = S[..., :-1, None], S[..., 1:, None]
    counts = np.sum((lo <= th) & (hi > th), axis=-2)
    if th.ndim == 0:
        counts = counts[..., 0]
    return counts if np.ndim(counts) else int(counts)


def empirical_lcr(realizations, s_th, T: float):
    """Mean up-crossings per unit length and its standard error.

    ``realizations`` are SNR traces (R, N), or precomputed crossing counts
    when ``s_th`` is None.
    """
    if T <= 0:
        raise DomainError("movable length must be positive for a crossing rate")
    counts = np.asarray(realizations if s_th is None else count_upcrossings(realizations, s_th),
                        dtype=float)
    R = counts.shape[0]
    mean = counts.mean(axis=0) / T
    se = counts.std(axis=0, ddof=1) / math.sqrt(R) / T if R > 1 else np.zeros_like(mean)
    return mean, se


def wilson_interval(k, n: int, confidence: float = 0.95):
    z = norm.ppf(0.5 + confidence / 2.0)
    k = np.asarray(k, dtype=float)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = np.where(k == 0, 0.0, np.clip(centre - half, 0.0, 1.0))
    hi = np.where(k == n, 1.0, np.clip(centre + half, 0.0, 1.0))
    return lo, hi


def empirical_sup_cdf(sup_samples, thresholds, confidence: float = 0.95):
    """Fraction of realizations whose grid maximum is <= each threshold.

    The grid maximum never exceeds the true supremum, so this is biased
    upwards as an estimate of the supremum CDF.
    """
    sup = np.sort(np.asarray(sup_samples, dtype=float))
    th = np.asarray(thresholds, dtype=float)
    k = np.searchsorted(sup, th, side="right")
    lo, hi = wilson_interval(k, sup.size, confidence)
    return k / sup.size, lo, hi


def simulate_stats(geometry: ArrayGeometry, params: ChannelParams, sim: SimConfig,
                   thresholds, threads: int | None = None, independent: bool = False,
                   factor: GridFactor | None = None) -> EmpiricalStats:
    """Run the simulator once and keep only per-realization summaries."""
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if factor is None:
        factor = _factor_for(geometry, sim, independent)
    R = sim.realizations
    sup = np.empty(R)
    first = np.empty(R)
    var = np.empty(R)
    counts = np.zeros((R, thresholds.size), dtype=np.int64)
    for start, S in iter_snr_batches(factor, params, sim, threads):
        sl = slice(start, start + S.shape[0])
        sup[sl] = S.max(axis=1)
        first[sl] = S[:, 0]
        if S.shape[1] > 1:
            var[sl] = np.maximum(np.diff(S, axis=1), 0.0).sum(axis=1)
            counts[sl] = count_upcrossings(S, thresholds)
        else:
            var[sl] = 0.0
    return EmpiricalStats(thresholds, sup, first, counts, var, geometry.movable_length)


# ---------------------------------------------------------------------------
# Oracles for the characteristic function and the derivative variance
# ---------------------------------------------------------------------------

def _cn_vectors(rng: np.random.Generator, samples: int, M: int) -> np.ndarray:
    x = rng.standard_normal((2, samples, M))
    return (x[0] + 1j * x[1]) * math.sqrt(0.5)


def _quad_form(v: np.ndarray, A: np.ndarray) -> np.ndarray:
    return np.einsum("ni,ij,nj->n", v.conj(), A, v).real


def mc_joint_cf(ctx, t1: float, t2: float, samples: int, seed: int = 0,
                chunk: int = 200_000) -> tuple[complex, float]:
    """Sample mean of exp(j t1 S + j t2 P) with S = gbar v^H Sigma v, P = v^H Q v."""
    if samples < 2:
        raise DomainError("need at least two samples")
    rng = realization_rng(seed, 0)
    gbar = ctx.params.mean_branch_snr
    total, sq = 0j, 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        v = _cn_vectors(rng, n, ctx.M)
        phase = np.exp(1j * (t1 * gbar * _quad_form(v, ctx.sigma) + t2 * _quad_form(v, ctx.Q)))
        total += phase.sum()
        sq += float(np.sum(np.abs(phase) ** 2))
        done += n
    mean = total / samples
    var = (sq - samples * abs(mean) ** 2) / (samples - 1)
    return complex(mean), math.sqrt(max(var, 0.0) / samples)


def mc_sdot_variance(ctx, samples: int, seed: int = 0) -> tuple[float, float]:
    """Sample mean of 4 gbar^2 h^H B h over h ~ CN(0, beta Sigma), with its standard error."""
    rng = realization_rng(seed, 1)
    params = ctx.params
    gbar = params.mean_branch_snr
    w, u = hermitian_eig(ctx.sigma)
    root = u * np.sqrt(np.maximum(w, 0.0))
    v = _cn_vectors(rng, samples, ctx.M)
    h = math.sqrt(params.beta) * v @ root.T
    vals = 4.0 * gbar ** 2 * _quad_form(h, ctx.b_matrix)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def sdot_variance_trace(ctx) -> float:
    return 4.0 * ctx.params.mean_branch_snr ** 2 * ctx.params.beta * float(
        np.trace(ctx.b_matrix @ ctx.sigma))


# ---------------------------------------------------------------------------
# Raw dumps
# ---------------------------------------------------------------------------

def dump_traces(path, traces) -> None:
    """Write SNR traces, one row per realization, position index ascending.

    ``.npy`` paths get a binary float64 array; anything else gets CSV with a
    ``k0, k1, ...`` header.
    """
    traces = np.atleast_2d(np.asarray(traces, dtype=float))
    path = os.fspath(path)
    if path.endswith(".npy"):
        np.save(path, traces)
        return
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"k{i}" for i in range(traces.shape[1])])
        for row in traces:
            w.writerow([repr(float(x)) for x in row])
