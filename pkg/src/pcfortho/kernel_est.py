"""Kernel estimators of the pair correlation function and bandwidth selection.

All three estimators share the form

    g(t) = pre(t) * sum_p k_b(t - |v_p - u_p|) * c_p

over ordered pairs ``p = (u, v)``, with ``c_p = 1 / (rho(u) rho(v) |W n W_h|)``
times ``1 / (sa_d |h|^(d-1))`` for the ``d`` and ``c`` variants.  ``pre`` is
``1 / (sa_d t^(d-1))`` for ``k``, 1 for ``d`` and ``1 / c(t; b)`` for ``c``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import (
    IntensityModel,
    PairSet,
    PointPattern,
    edge_correction_factor,
    enumerate_pairs,
    resolve_intensity,
    sphere_surface_area,
)
from .errors import ConfigurationError, DomainError
from .specialfun import gauss_legendre

UNIFORM = "uniform"
EPANECHNIKOV = "epanechnikov"
_KIND_CODE = {UNIFORM: 0, EPANECHNIKOV: 1}
ESTIMATORS = ("k", "d", "c")

# Pairs closer than this are dropped by every estimator.
R_MIN_DEFAULT = 1e-3


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    bandwidth: float

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ConfigurationError(f"unknown kernel {self.kind!r}")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def code(self) -> int:
        return _KIND_CODE[self.kind]


def kernel_value(spec: KernelSpec, t):
    """``k_b(t) = k(t / b) / b``."""
    z = np.asarray(t, dtype=float) / spec.bandwidth
    inside = np.abs(z) <= 1.0
    base = 0.5 * np.ones_like(z) if spec.kind == UNIFORM else 0.75 * (1.0 - z * z)
    out = np.where(inside, base, 0.0) / spec.bandwidth
    return float(out) if np.ndim(t) == 0 else out


def kernel_mass(spec: KernelSpec, r):
    """``c(r; b) = int_{-b}^{min(r, b)} k_b(t) dt``."""
    z = np.minimum(np.asarray(r, dtype=float) / spec.bandwidth, 1.0)
    z = np.maximum(z, -1.0)
    if spec.kind == UNIFORM:
        out = 0.5 * (z + 1.0)
    else:
        out = 0.75 * (z - z**3 / 3.0) + 0.5
    return float(out) if np.ndim(r) == 0 else out


# bandwidth rules -----------------------------------------------------------

@dataclass(frozen=True)
class Fixed:
    b: float


@dataclass(frozen=True)
class StoyanDefault:
    """``0.15 / sqrt(rho_hat)``."""

    factor: float = 0.15


@dataclass(frozen=True)
class Illian:
    """``0.10 / sqrt(rho_hat)``."""

    factor: float = 0.10


@dataclass(frozen=True)
class CrossValidated:
    grid: tuple[float, ...]

    def __post_init__(self):
        if len(self.grid) == 0:
            raise ConfigurationError("cross-validation grid is empty")
        if any(not b > 0 for b in self.grid):
            raise ConfigurationError("cross-validation bandwidths must be positive")


BandwidthRule = Fixed | StoyanDefault | Illian | CrossValidated


def default_cv_grid(n: int = 20, lo: float = 0.005, hi: float = 0.1) -> tuple[float, ...]:
    return tuple(np.geomspace(lo, hi, n))


def rule_bandwidth(rule: BandwidthRule, pattern: PointPattern) -> float:
    """Bandwidth for the non-data-driven rules (``rho_hat = n / |W|``)."""
    if isinstance(rule, Fixed):
        return float(rule.b)
    if isinstance(rule, (StoyanDefault, Illian)):
        rho_hat = pattern.n / pattern.window.volume
        if rho_hat <= 0:
            raise ConfigurationError("intensity-based bandwidth needs a non-empty pattern")
        return rule.factor / math.sqrt(rho_hat)
    raise ConfigurationError(f"rule {rule!r} needs cross-validation")


# pair sums -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelPairs:
    """Pairs sorted by distance with their edge/intensity weights."""

    pairs: PairSet
    order: np.ndarray  # distance-sorted permutation of pairs
    base: np.ndarray  # 1 / (rho rho |W n W_h|), pair order
    d: int
    sa: float

    @classmethod
    def build(cls, pattern: PointPattern, rho: np.ndarray, r_max: float,
              r_min: float = R_MIN_DEFAULT, pairs: PairSet | None = None) -> "KernelPairs":
        if pairs is None:
            pairs = enumerate_pairs(pattern, r_min, r_max)
        else:
            pairs = pairs.subset((pairs.dist > r_min) & (pairs.dist < r_max))
        win = pattern.window
        area = win.volume * edge_correction_factor(win, pairs.lags)
        keep = area > 0
        if not keep.all():
            pairs, area = pairs.subset(keep), area[keep]
        base = 1.0 / (rho[pairs.i] * rho[pairs.j] * area)
        order = np.argsort(pairs.dist, kind="stable")
        return cls(pairs, order, np.asarray(base, dtype=float), pattern.d, sphere_surface_area(pattern.d))

    def coefficients(self, estimator: str) -> np.ndarray:
        if estimator == "k":
            return self.base
        return self.base / (self.sa * self.pairs.dist ** (self.d - 1))

    def prefactor(self, estimator: str, kernel: KernelSpec, t: np.ndarray) -> np.ndarray:
        if estimator == "k":
            return 1.0 / (self.sa * t ** (self.d - 1))
        if estimator == "d":
            return np.ones_like(t)
        if estimator == "c":
            return 1.0 / kernel_mass(kernel, t)
        raise ConfigurationError(f"unknown kernel estimator {estimator!r}")

    def evaluate(self, estimator: str, kernel: KernelSpec, t) -> np.ndarray:
        t = np.ascontiguousarray(np.atleast_1d(np.asarray(t, dtype=float)))
        coef = self.coefficients(estimator)
        s = _backend.kernels.kernel_sums(
            t, np.ascontiguousarray(self.pairs.dist[self.order]),
            np.ascontiguousarray(coef[self.order]), float(kernel.bandwidth), kernel.code,
        )
        return self.prefactor(estimator, kernel, t) * s


def estimate_g(pattern: PointPattern, intensity: IntensityModel, kernel: KernelSpec, r,
               estimator: str = "k", r_min: float = R_MIN_DEFAULT,
               rho: np.ndarray | None = None) -> np.ndarray | float:
    """Kernel estimate ``g_k``, ``g_d`` or ``g_c`` at lags ``r > 0``."""
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"unknown kernel estimator {estimator!r}")
    ra = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(~(ra > 0)):
        raise DomainError("kernel estimators are evaluated at r > 0")
    if rho is None:
        rho = resolve_intensity(pattern, intensity)
    kp = KernelPairs.build(pattern, rho, float(ra.max()) + kernel.bandwidth, r_min)
    out = kp.evaluate(estimator, kernel, ra)
    return float(out[0]) if np.ndim(r) == 0 else out


def estimate_gk(pattern, intensity, kernel, r, **kw):
    return estimate_g(pattern, intensity, kernel, r, "k", **kw)


def estimate_gd(pattern, intensity, kernel, r, **kw):
    return estimate_g(pattern, intensity, kernel, r, "d", **kw)


def estimate_gc(pattern, intensity, kernel, r, **kw):
    return estimate_g(pattern, intensity, kernel, r, "c", **kw)


# cross-validation ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CVResult:
    bandwidth: float
    grid: np.ndarray
    criterion: np.ndarray


def _cv_criterion(kp: KernelPairs, estimator: str, kernel: KernelSpec, R: float,
                  incident: tuple[np.ndarray, np.ndarray], reverse: np.ndarray,
                  order: int) -> float:
    x, w = gauss_legendre(order).mapped(0.0, R)
    g = kp.evaluate(estimator, kernel, x)
    integral = kp.sa * float(np.dot(w, g * g * x ** (kp.d - 1)))

    pairs = kp.pairs
    q = np.nonzero(pairs.dist <= R)[0]
    if q.size == 0:
        return integral
    t = np.ascontiguousarray(pairs.dist[q])
    coef = np.ascontiguousarray(kp.coefficients(estimator))
    b, code = float(kernel.bandwidth), kernel.code
    full = _backend.kernels.kernel_sums(t, np.ascontiguousarray(pairs.dist[kp.order]),
                                        np.ascontiguousarray(coef[kp.order]), b, code)
    ptr, idx = incident
    touching = _backend.kernels.incident_sums(t, pairs.i[q], pairs.j[q], ptr,
                                              np.ascontiguousarray(pairs.dist[idx]),
                                              np.ascontiguousarray(coef[idx]), b, code)
    # (u, v) and (v, u) were removed once through u and once through v
    both = kernel_value(kernel, 0.0) * (coef[q] + coef[reverse[q]])
    loo = kp.prefactor(estimator, kernel, t) * (full - touching + both)
    return integral - 2.0 * float(np.sum(loo * kp.base[q]))


def cv_criterion(pattern: PointPattern, intensity: IntensityModel, estimator: str, R: float,
                 grid, kernel: str = EPANECHNIKOV, r_min: float = R_MIN_DEFAULT,
                 order: int = 128, rho: np.ndarray | None = None,
                 max_workers: int | None = None) -> np.ndarray:
    """Cross-validation criterion ``M(b)`` for every bandwidth in ``grid``.

    Leave-two-out estimates are obtained by subtracting the terms of all pairs
    touching either deleted point from the full sums.

    For ``estimator="k"`` the integrand behaves like ``1/r`` near 0 as soon as
    a pair lies within ``b`` of the origin, so the quadrature value grows with
    ``b`` and small bandwidths are favoured.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigurationError("cross-validation grid is empty")
    if np.any(~(grid > 0)):
        raise ConfigurationError("cross-validation bandwidths must be positive")
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"unknown kernel estimator {estimator!r}")
    if rho is None:
        rho = resolve_intensity(pattern, intensity)
    all_pairs = enumerate_pairs(pattern, r_min, R + float(grid.max()))

    def one(b):
        kp = KernelPairs.build(pattern, rho, R + b, r_min, pairs=all_pairs)
        return _cv_criterion(kp, estimator, KernelSpec(kernel, b), R,
                             kp.pairs.incident(), kp.pairs.reverse_index(), order)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as ex:
            return np.array(list(ex.map(one, grid)))
    return np.array([one(b) for b in grid])


def cv_bandwidth(pattern: PointPattern, intensity: IntensityModel, estimator: str, R: float,
                 grid, kernel: str = EPANECHNIKOV, r_min: float = R_MIN_DEFAULT,
                 order: int = 128, rho: np.ndarray | None = None,
                 max_workers: int | None = None) -> CVResult:
    """Bandwidth minimising ``M(b)`` over ``grid``; ties go to the smaller bandwidth."""
    grid = np.sort(np.asarray(grid, dtype=float))
    crit = cv_criterion(pattern, intensity, estimator, R, grid, kernel, r_min, order, rho, max_workers)
    return CVResult(float(grid[int(np.argmin(crit))]), grid, crit)


def brute_force_cv_criterion(pattern: PointPattern, rho: np.ndarray, estimator: str, R: float,
                             b: float, kernel: str = EPANECHNIKOV, r_min: float = R_MIN_DEFAULT,
                             order: int = 128) -> float:
    """``M(b)`` with every leave-two-out estimate recomputed from scratch. For testing only."""
    spec = KernelSpec(kernel, b)
    kp = KernelPairs.build(pattern, rho, R + b, r_min)
    x, w = gauss_legendre(order).mapped(0.0, R)
    g = kp.evaluate(estimator, spec, x)
    total = kp.sa * float(np.dot(w, g * g * x ** (kp.d - 1)))
    for p in range(len(kp.pairs)):
        r = kp.pairs.dist[p]
        if r > R:
            continue
        u, v = kp.pairs.i[p], kp.pairs.j[p]
        keep = np.ones(pattern.n, dtype=bool)
        keep[[u, v]] = False
        reduced = PointPattern(pattern.points[keep], pattern.window)
        kr = KernelPairs.build(reduced, rho[keep], R + b, r_min)
        total -= 2.0 * float(kr.evaluate(estimator, spec, [r])[0]) * kp.base[p]
    return total
