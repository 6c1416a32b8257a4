"""Array geometry and the Jakes correlation structures built on it.

All lengths are in wavelengths. Antenna ``r`` of an array at position ``t``
sits at the planar point ``(t, r * spacing)``; the channel field is isotropic
with correlation ``J0(2 pi d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import DomainError, bessel_j0, bessel_j1

__all__ = [
    "ArrayGeometry",
    "ChannelParams",
    "CorrelationSet",
    "DegenerateGeometryError",
    "pair_distance",
    "spatial_corr",
    "build_sigma",
    "build_b_matrix",
    "cross_covariance",
    "grid_covariance",
    "correlation_set",
    "uncorrelated_set",
    "stacked_coordinates",
    "JAKES_CURVATURE",
]

JAKES_CURVATURE = np.pi ** 2


class DegenerateGeometryError(DomainError):
    pass


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int
    spacing: float
    movable_length: float = 1.0

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 1:
            raise DomainError("num_elements must be a positive integer")
        if not (self.spacing >= 0 and self.movable_length >= 0):
            raise DomainError("spacing and movable_length must be non-negative")

    @property
    def M(self) -> int:
        return int(self.num_elements)


@dataclass(frozen=True)
class ChannelParams:
    beta: float = 1.0
    symbol_energy: float = 1.0
    noise_var: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and self.symbol_energy > 0 and self.noise_var > 0):
            raise DomainError("channel parameters must be strictly positive")

    @property
    def mean_branch_snr(self) -> float:
        return self.symbol_energy * self.beta / self.noise_var


@dataclass(frozen=True)
class CorrelationSet:
    sigma: np.ndarray
    b_matrix: np.ndarray
    geometry: ArrayGeometry | None = field(default=None, compare=False)

    @property
    def M(self) -> int:
        return self.sigma.shape[0]


def pair_distance(geometry: ArrayGeometry, r: int, s: int, tau: float) -> float:
    """Distance between antenna r at t and antenna s at t + tau (1-based indices)."""
    M = geometry.M
    if not (1 <= r <= M and 1 <= s <= M):
        raise DomainError(f"antenna index out of range 1..{M}")
    return float(np.hypot(tau, geometry.spacing * (r - s)))


def spatial_corr(d):
    return bessel_j0(2.0 * np.pi * np.asarray(d, dtype=float))


def _offsets(geometry: ArrayGeometry) -> np.ndarray:
    k = np.arange(geometry.M)
    return np.abs(k[:, None] - k[None, :]) * geometry.spacing


def build_sigma(geometry: ArrayGeometry) -> np.ndarray:
    return np.atleast_2d(spatial_corr(_offsets(geometry)))


def build_b_matrix(geometry: ArrayGeometry) -> np.ndarray:
    """Curvature matrix: pi^2 on the diagonal, pi J1(2 pi d) / d off it."""
    M = geometry.M
    if M > 1 and geometry.spacing == 0:
        raise DegenerateGeometryError("co-located elements (spacing 0) make B degenerate")
    d = _offsets(geometry)
    out = np.full((M, M), JAKES_CURVATURE)
    off = ~np.eye(M, dtype=bool)
    if M > 1:
        out[off] = np.pi * bessel_j1(2.0 * np.pi * d[off]) / d[off]
    return out


def cross_covariance(geometry: ArrayGeometry, tau: float) -> np.ndarray:
    """[Sigma_tau]_{r,s} = E[h_r(t) h_s*(t + tau)] / beta."""
    return np.atleast_2d(spatial_corr(np.hypot(tau, _offsets(geometry))))


def grid_covariance(geometry: ArrayGeometry, grid) -> np.ndarray:
    """Covariance of the stacked channel vector over a position grid.

    Row/column index ``k * M + i`` is antenna ``i`` at ``grid[k]``.
    """
    grid = _check_grid(grid)
    T = geometry.movable_length
    if grid[0] < -1e-12 or grid[-1] > T + 1e-12 * max(1.0, T):
        raise DomainError("grid positions must lie in [0, movable_length]")
    t, y = stacked_coordinates(geometry, grid)
    d = np.hypot(t[:, None] - t[None, :], y[:, None] - y[None, :])
    return spatial_corr(d)


def stacked_coordinates(geometry: ArrayGeometry, grid) -> tuple[np.ndarray, np.ndarray]:
    grid = np.asarray(grid, dtype=float)
    M = geometry.M
    return np.repeat(grid, M), np.tile(np.arange(M) * geometry.spacing, grid.size)


def _check_grid(grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing")
    return grid


def correlation_set(geometry: ArrayGeometry) -> CorrelationSet:
    return CorrelationSet(build_sigma(geometry), build_b_matrix(geometry), geometry)


def uncorrelated_set(num_elements: int) -> CorrelationSet:
    """Independent branches, each a Jakes process along the motion axis."""
    eye = np.eye(num_elements)
    return CorrelationSet(eye, JAKES_CURVATURE * eye, None)
