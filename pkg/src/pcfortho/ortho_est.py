"""Orthogonal series estimation of the pair correlation function.

The coefficient estimates are pair sums

    theta_k = sum_{(u, v)} a_k(u, v),
    a_k(u, v) = phi_k(|v-u| - r_min) w(|v-u| - r_min)
                / (sa_d rho(u) rho(v) |v-u|^(d-1) |W n W_{v-u}|),

over ordered distinct pairs with lag length in (r_min, r_min + R).  The
estimate of theta_k^2 keeps only the products a_k(p) a_k(q) whose four
points are distinct.  Since ``a_k`` is symmetric in its two points, removing
the products that share a point from ``theta_k^2`` leaves

    theta_k^2 - 4 sum_u A_k(u)^2 + 2 sum_p a_k(p)^2,

with ``A_k(u)`` the sum of ``a_k`` over the ordered pairs starting at u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .basis import BESSEL, COSINE, BasisSpec, basis_matrix, phi_weight_integrals, weight
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

K_MAX_DEFAULT = 49
SIMPLE = "simple"
REFINED = "refined"
WAHBA = "wahba"
PLAIN = "plain"
PLUS_ONE = "plus_one"
CENTRED = "centred"
RAW = "raw"
TUNINGS = (CENTRED, RAW)

# Pairs are reduced in fixed chunks so sums do not depend on array sizes elsewhere.
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    basis: BasisSpec
    theta_hat: np.ndarray
    theta_sq_hat: np.ndarray
    n_pairs: int

    @property
    def K(self) -> int:
        return self.theta_hat.shape[0]

    @property
    def b_star(self) -> np.ndarray:
        """Estimated optimal shrinkage ``theta2_hat / theta_hat^2`` (0 where theta_hat = 0)."""
        t2 = self.theta_hat**2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(t2 > 0, self.theta_sq_hat / t2, 0.0)


def pair_terms(pattern: PointPattern, rho: np.ndarray, basis: BasisSpec,
               pairs: PairSet | None = None) -> tuple[PairSet, np.ndarray]:
    """Pairs in the lag range and their scalar factor ``w / (sa rho rho r^(d-1) |W n W_h|)``.

    The basis value is not included.
    """
    lo, hi = basis.r_min, basis.r_min + basis.R
    if pairs is None:
        pairs = enumerate_pairs(pattern, lo, hi)
    else:
        pairs = pairs.subset((pairs.dist > lo) & (pairs.dist < hi))
    win = pattern.window
    area = win.volume * edge_correction_factor(win, pairs.lags)
    keep = area > 0
    if not keep.all():
        pairs = pairs.subset(keep)
        area = area[keep]
    d = pattern.d
    r = pairs.dist
    scale = weight(basis, r - basis.r_min) / (
        sphere_surface_area(d) * rho[pairs.i] * rho[pairs.j] * r ** (d - 1) * area
    )
    return pairs, np.asarray(scale, dtype=float)


def _accumulate(pairs: PairSet, scale: np.ndarray, basis: BasisSpec, K: int):
    """theta_k, sum_p a_k(p)^2 and row sums A_k(u), from the i < j half of the pairs."""
    n = pairs.n_points
    upper = pairs.i < pairs.j
    ui, uj = pairs.i[upper], pairs.j[upper]
    r = pairs.dist[upper] - basis.r_min
    s = scale[upper]
    theta = np.zeros(K)
    sq = np.zeros(K)
    rows = np.zeros((n, K))
    for start in range(0, ui.shape[0], _CHUNK):
        sl = slice(start, start + _CHUNK)
        a = basis_matrix(basis, K, r[sl], check=False) * s[sl, None]
        theta += 2.0 * a.sum(axis=0)
        sq += 2.0 * (a * a).sum(axis=0)
        np.add.at(rows, ui[sl], a)
        np.add.at(rows, uj[sl], a)
    return theta, sq, rows


def estimate_coefficients(pattern: PointPattern, intensity: IntensityModel, basis: BasisSpec,
                          K_max: int = K_MAX_DEFAULT + 1, pairs: PairSet | None = None,
                          rho: np.ndarray | None = None) -> CoefficientSet:
    """Unbiased coefficient estimates and four-distinct-point estimates of their squares.

    Parameters
    ----------
    K_max : int
        Number of coefficients. The cut-off rule needs one more than the
        largest admissible cut-off.
    pairs : PairSet, optional
        Precomputed pairs covering at least (r_min, r_min + R).
    rho : ndarray, optional
        Per-point intensities; resolved from ``intensity`` when omitted.
    """
    if K_max < 2:
        raise ConfigurationError(f"K_max must be at least 2, got {K_max}")
    if basis.kind == COSINE and basis.r_min <= 0:
        raise ConfigurationError("the cosine basis needs r_min > 0 (infinite variance otherwise)")
    if pattern.d != basis.d:
        raise ConfigurationError(f"basis dimension {basis.d} does not match pattern dimension {pattern.d}")
    if rho is None:
        rho = resolve_intensity(pattern, intensity)
    pairs, scale = pair_terms(pattern, rho, basis, pairs)
    theta, sq, rows = _accumulate(pairs, scale, basis, K_max)
    theta_sq = theta**2 - 4.0 * np.einsum("ik,ik->k", rows, rows) + 2.0 * sq
    return CoefficientSet(basis, theta, theta_sq, len(pairs))


def estimate_theta_squared(pattern: PointPattern, intensity: IntensityModel, basis: BasisSpec,
                           K_max: int = K_MAX_DEFAULT + 1) -> np.ndarray:
    """Four-distinct-point estimates of ``theta_k^2``, k = 1..K_max."""
    return estimate_coefficients(pattern, intensity, basis, K_max).theta_sq_hat


def centred_coefficients(coeffs: CoefficientSet, upper: str = "R") -> CoefficientSet:
    """Coefficients of ``g - 1``: ``vartheta_k = theta_k - c_k`` with ``c_k = int phi_k w``.

    ``theta2_k - 2 c_k theta_k + c_k^2`` estimates ``vartheta_k^2`` because
    ``theta_k`` and ``theta2_k`` are unbiased for ``theta_k`` and ``theta_k^2``.
    """
    c = phi_weight_integrals(coeffs.basis, coeffs.K, upper)
    theta = coeffs.theta_hat - c
    theta_sq = coeffs.theta_sq_hat - 2.0 * c * coeffs.theta_hat + c * c
    return CoefficientSet(coeffs.basis, theta, theta_sq, coeffs.n_pairs)


def tuning_coefficients(coeffs: CoefficientSet, variant: str, tuning: str = CENTRED,
                        upper: str = "R") -> CoefficientSet:
    """Coefficients the cut-off and weights are fitted to.

    The ``plus_one`` estimator shrinks ``vartheta_k``, so by default its
    risk is estimated from the centred coefficients; ``tuning="raw"`` keeps
    ``theta_k`` for every variant.
    """
    if tuning not in TUNINGS:
        raise ConfigurationError(f"tuning: expected one of {TUNINGS}, got {tuning!r}")
    if variant == PLUS_ONE and tuning == CENTRED:
        return centred_coefficients(coeffs, upper)
    return coeffs


def select_cutoff(coeffs: CoefficientSet, K_max: int = K_MAX_DEFAULT) -> int:
    """First ``k`` in [2, K_max] with ``theta_{k+1}^2 - 2 theta2_{k+1} > 0``; K_max if none."""
    if K_max < 2:
        raise ConfigurationError(f"K_max must be at least 2, got {K_max}")
    if coeffs.K < K_max + 1:
        raise ConfigurationError(f"cut-off selection up to {K_max} needs {K_max + 1} coefficients")
    crit = coeffs.theta_hat**2 - 2.0 * coeffs.theta_sq_hat
    for k in range(2, K_max + 1):
        if crit[k] > 0:  # index k is coefficient k + 1
            return k
    return K_max


@dataclass(frozen=True, eq=False)
class SmoothingScheme:
    """Shrinkage weights ``b_k`` with ``b_k = 0`` for ``k > K``."""

    kind: str
    K: int
    weights: np.ndarray
    c1: float | None = None
    c2: float | None = None

    @classmethod
    def simple(cls, K: int, length: int | None = None) -> "SmoothingScheme":
        b = np.zeros(max(length or K, K))
        b[:K] = 1.0
        return cls(SIMPLE, K, b)

    @classmethod
    def wahba(cls, K: int, c1: float, c2: float, length: int | None = None) -> "SmoothingScheme":
        if not (c1 > 0 and c2 > 1):
            raise ConfigurationError(f"Wahba weights need c1 > 0 and c2 > 1, got {c1}, {c2}")
        b = np.zeros(max(length or K, K))
        k = np.arange(1, K + 1)
        with np.errstate(over="ignore"):
            b[:K] = 1.0 / (1.0 + c1 * k**c2)
        return cls(WAHBA, K, b, float(c1), float(c2))

    @classmethod
    def refined(cls, coeffs: CoefficientSet, K: int) -> "SmoothingScheme":
        b = np.zeros(coeffs.K)
        b[:K] = np.clip(coeffs.b_star[:K], 0.0, 1.0)
        return cls(REFINED, K, b)

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(length)
        m = min(length, self.weights.shape[0])
        out[:m] = self.weights[:m]
        return out

    def describe(self) -> dict:
        out = {"scheme": self.kind, "K": int(self.K)}
        if self.kind == WAHBA:
            out.update(c1=self.c1, c2=self.c2)
        return out


def wahba_objective(theta_hat, theta_sq_hat, K: int, c1: float, c2: float) -> float:
    k = np.arange(1, K + 1)
    with np.errstate(over="ignore"):
        b = 1.0 / (1.0 + c1 * k**c2)
    return float(np.sum(b * b * theta_hat[:K] ** 2 - 2.0 * b * theta_sq_hat[:K]))


def fit_wahba(theta_hat, theta_sq_hat, K: int) -> tuple[float, float]:
    """Minimise the estimated risk over ``c1 > 0, c2 > 1`` by Nelder-Mead.

    Works in ``(log c1, log(c2 - 1))`` from a 4 x 4 grid of starting points
    and keeps the best end point (earliest start on ties).
    """
    t = np.asarray(theta_hat, dtype=float)
    t2 = np.asarray(theta_sq_hat, dtype=float)

    def params(x):
        # keep c2 - 1 representable: the risk is often minimised as c2 -> 1
        return math.exp(min(max(x[0], -700.0), 700.0)), 1.0 + math.exp(min(max(x[1], -30.0), 50.0))

    def f(x):
        return wahba_objective(t, t2, K, *params(x))

    best_x, best_f = None, np.inf
    for lc1 in np.log([1e-3, 1e-1, 1e1, 1e3]):
        for lc2 in np.log([0.1, 1.0, 3.0, 7.0]):
            res = minimize(f, np.array([lc1, lc2]), method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000})
            if res.fun < best_f:
                best_x, best_f = res.x, res.fun
    return params(best_x)


def fit_smoothing(coeffs: CoefficientSet, kind: str, K_hat: int) -> SmoothingScheme:
    """Smoothing weights for a cut-off chosen by :func:`select_cutoff`."""
    if K_hat < 1 or K_hat > coeffs.K:
        raise ConfigurationError(f"cut-off {K_hat} outside 1..{coeffs.K}")
    if kind == SIMPLE:
        return SmoothingScheme.simple(K_hat, coeffs.K)
    if kind == REFINED:
        return SmoothingScheme.refined(coeffs, K_hat)
    if kind == WAHBA:
        c1, c2 = fit_wahba(coeffs.theta_hat, coeffs.theta_sq_hat, K_hat)
        return SmoothingScheme.wahba(K_hat, c1, c2, coeffs.K)
    raise ConfigurationError(f"unknown smoothing scheme {kind!r}")


def risk_estimate(coeffs: CoefficientSet, scheme: SmoothingScheme) -> float:
    """Estimated risk ``sum_k b_k^2 theta_k^2 - 2 b_k theta2_k`` (MISE up to a constant)."""
    b = scheme.padded(coeffs.K)
    return float(np.sum(b * b * coeffs.theta_hat**2 - 2.0 * b * coeffs.theta_sq_hat))


@dataclass(frozen=True, eq=False)
class EstimateCurve:
    r: np.ndarray
    values: np.ndarray
    estimator: str
    variant: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.r.shape != self.values.shape or np.any(np.diff(self.r) <= 0):
            raise DomainError("curve grid must be strictly increasing and match the values")

    def clamped(self) -> "EstimateCurve":
        return EstimateCurve(self.r, np.maximum(self.values, 0.0), self.estimator,
                             self.variant, dict(self.params, clamped=True))


def default_variant(basis: BasisSpec) -> str:
    return PLUS_ONE if basis.kind == BESSEL else PLAIN


def _check_grid(basis: BasisSpec, r: np.ndarray) -> None:
    lo, hi = basis.r_min, basis.r_min + basis.R
    if np.any(~((r > lo) & (r < hi))):
        raise DomainError(f"evaluation points must lie in the open interval ({lo}, {hi})")


def series_values(coeffs: CoefficientSet, scheme: SmoothingScheme, r,
                  variant: str | None = None, upper: str = "R") -> np.ndarray:
    """Series estimate at lags ``r`` from fitted coefficients (matrix form)."""
    basis = coeffs.basis
    r = np.atleast_1d(np.asarray(r, dtype=float))
    _check_grid(basis, r)
    variant = variant or default_variant(basis)
    K = scheme.K
    b = scheme.padded(K)
    coef = coeffs.theta_hat[:K].copy()
    if variant == PLUS_ONE:
        coef -= phi_weight_integrals(basis, K, upper)
    elif variant != PLAIN:
        raise ConfigurationError(f"unknown variant {variant!r}")
    phi = basis_matrix(basis, K, r - basis.r_min, check=False)
    out = phi @ (b * coef)
    return out + 1.0 if variant == PLUS_ONE else out


def estimate_curve(pattern: PointPattern, intensity: IntensityModel, basis: BasisSpec,
                   scheme: SmoothingScheme | str, r_grid, variant: str | None = None,
                   K_max: int = K_MAX_DEFAULT, upper: str = "R",
                   coeffs: CoefficientSet | None = None, tuning: str = CENTRED) -> EstimateCurve:
    """Orthogonal series estimate of ``g`` on ``r_grid``.

    ``scheme`` is either a fitted :class:`SmoothingScheme` or one of
    ``"simple"``, ``"refined"``, ``"wahba"``, in which case the cut-off is
    chosen by :func:`select_cutoff` over ``2..K_max`` on the coefficients
    given by :func:`tuning_coefficients`.
    """
    r = np.atleast_1d(np.asarray(r_grid, dtype=float))
    _check_grid(basis, r)
    variant = variant or default_variant(basis)
    if coeffs is None:
        coeffs = estimate_coefficients(pattern, intensity, basis, K_max + 1)
    params = {"basis": basis.kind, "R": basis.R, "r_min": basis.r_min}
    if isinstance(scheme, str):
        tuned = tuning_coefficients(coeffs, variant, tuning, upper)
        K_hat = select_cutoff(tuned, K_max)
        scheme = fit_smoothing(tuned, scheme, K_hat)
        params["tuning"] = tuning if variant == PLUS_ONE else RAW
    values = series_values(coeffs, scheme, r, variant, upper)
    params.update(scheme.describe())
    return EstimateCurve(r, values, f"ortho-{basis.kind}-{scheme.kind}", variant, params)
