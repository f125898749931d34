"""Orthonormal cosine and Fourier-Bessel systems on (0, R)."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigurationError, DomainError, InvalidDimensionError
from .specialfun import bessel_j, bessel_j_roots, gauss_legendre

COSINE = "cosine"
BESSEL = "bessel"
ROOT_BLOCK = 64
MAX_ROOTS = 10_000


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Orthonormal basis on (0, R) used to expand ``g`` on (r_min, r_min + R).

    Parameters
    ----------
    kind : {"cosine", "bessel"}
    R : float
        Length of the lag range.
    r_min : float
        Left end of the lag range. Must be positive for the cosine basis,
        otherwise the coefficient estimators have infinite variance.
    d : int
        Dimension of the point process; sets the Bessel order ``(d - 2) / 2``
        and the weight ``r^(d-1)``.
    """

    kind: str
    R: float
    r_min: float = 1e-3
    d: int = 2
    _roots: list = field(default_factory=lambda: [np.zeros(0)], repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.kind not in (COSINE, BESSEL):
            raise ConfigurationError(f"unknown basis kind {self.kind!r}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise DomainError(f"R must be positive, got {self.R}")
        if not self.r_min >= 0:
            raise DomainError(f"r_min must be non-negative, got {self.r_min}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidDimensionError(f"dimension must be a positive integer, got {self.d}")
        if self.kind == COSINE and self.r_min <= 0:
            raise ConfigurationError(
                "the cosine basis needs r_min > 0: with r_min = 0 the coefficient "
                "estimators have infinite variance for d > 1"
            )

    @property
    def nu(self) -> float:
        return (self.d - 2) / 2.0

    def roots(self, count: int) -> np.ndarray:
        """First ``count`` positive zeros of ``J_nu``, cached in blocks of 64."""
        if count > MAX_ROOTS:
            raise CapacityError(f"at most {MAX_ROOTS} basis functions are supported")
        cached = self._roots[0]
        if cached.shape[0] < count:
            with self._lock:
                cached = self._roots[0]
                if cached.shape[0] < count:
                    size = min(MAX_ROOTS, ROOT_BLOCK * math.ceil(count / ROOT_BLOCK))
                    cached = bessel_j_roots(self.nu, size)
                    cached.setflags(write=False)
                    self._roots[0] = cached
        return cached[:count]


def _check_k(basis: BasisSpec, k: int) -> None:
    if int(k) != k or k < 1:
        raise DomainError(f"basis index must be a positive integer, got {k}")
    if k > MAX_ROOTS:
        raise CapacityError(f"basis index {k} exceeds the {MAX_ROOTS} available functions")


def _check_r(basis: BasisSpec, r: np.ndarray) -> None:
    if np.any(~np.isfinite(r)) or np.any(r < 0) or np.any(r > basis.R):
        raise DomainError(f"basis functions are defined on [0, R] = [0, {basis.R}]")


def basis_matrix(basis: BasisSpec, K: int, r, check: bool = True) -> np.ndarray:
    """Matrix ``M[m, k-1] = phi_k(r[m])`` for k = 1..K.

    ``r = 0`` is handled through the limit of ``J_nu(z) z^-nu``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if check:
        _check_r(basis, r)
    _check_k(basis, K)
    R = basis.R
    if basis.kind == COSINE:
        freq = np.arange(K) * math.pi / R
        out = math.sqrt(2.0 / R) * np.cos(np.outer(r, freq))
        out[:, 0] = 1.0 / math.sqrt(R)
        return out
    nu = basis.nu
    alpha = basis.roots(K)
    norm = math.sqrt(2.0) / (R * bessel_j(nu + 1.0, alpha))
    z = np.outer(r, alpha / R)
    if nu == -0.5:
        # r^(1/2) J_{-1/2}(r a / R) = sqrt(2R / (pi a)) cos(r a / R)
        vals = np.sqrt(2.0 * R / (math.pi * alpha)) * np.cos(z)
    elif nu == 0:
        vals = bessel_j(0.0, z)
    else:
        vals = np.empty_like(z)
        zero = r == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            vals[~zero] = bessel_j(nu, z[~zero]) * (r[~zero, None] ** -nu)
        vals[zero] = (alpha / (2.0 * R)) ** nu / math.gamma(nu + 1.0)
    return vals * norm


def eval_phi(basis: BasisSpec, k: int, r):
    """``phi_k(r)`` for a scalar or array ``r`` in [0, R]."""
    _check_k(basis, k)
    scalar = np.ndim(r) == 0
    vals = basis_matrix(basis, k, r)[:, k - 1]
    return float(vals[0]) if scalar else vals


def weight(basis: BasisSpec, r):
    """Weight function: 1 for cosine, ``r^(d-1)`` for Fourier-Bessel."""
    ra = np.asarray(r, dtype=float)
    out = np.ones_like(ra) if basis.kind == COSINE else ra ** (basis.d - 1)
    return float(out) if np.ndim(r) == 0 else out


def phi_weight_integrals(basis: BasisSpec, K: int, upper: str = "R") -> np.ndarray:
    """``int_0^U phi_k(r) w(r) dr`` for k = 1..K, with ``U = R`` or ``U = r_min + R``.

    The functions are continued past R by their defining formulas when
    ``upper="rmin+R"``.
    """
    if upper == "R":
        U = basis.R
    elif upper == "rmin+R":
        U = basis.r_min + basis.R
    else:
        raise ConfigurationError(f"upper must be 'R' or 'rmin+R', got {upper!r}")
    R = basis.R
    k = np.arange(1, K + 1)
    if basis.kind == COSINE:
        out = np.empty(K)
        out[0] = U / math.sqrt(R)
        m = (k[1:] - 1) * math.pi / R
        out[1:] = math.sqrt(2.0 / R) * np.sin(m * U) / m
        if U == R:
            out[1:] = 0.0
        return out
    nu = basis.nu
    alpha = basis.roots(K)
    # int_0^U r^(nu+1) J_nu(c r) dr = U^(nu+1) J_{nu+1}(c U) / c
    c = alpha / R
    j_end = bessel_j(nu + 1.0, alpha) if U == R else bessel_j(nu + 1.0, c * U)
    return math.sqrt(2.0) / (R * bessel_j(nu + 1.0, alpha)) * U ** (nu + 1.0) * j_end / c


def phi_weight_integral(basis: BasisSpec, k: int, upper: str = "R") -> float:
    _check_k(basis, k)
    return float(phi_weight_integrals(basis, k, upper)[k - 1])


def integrate(f, a: float, b: float, order: int = 128, tol: float = 1e-9) -> float:
    """Gauss-Legendre integral of ``f`` on (a, b), doubling the order until two agree."""
    prev = gauss_legendre(order).integrate(f, a, b)
    while order < 512:
        order *= 2
        cur = gauss_legendre(order).integrate(f, a, b)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    return prev


def gram_matrix(basis: BasisSpec, K: int, order: int = 256) -> np.ndarray:
    """``G[j, k] = int_0^R phi_j phi_k w dr`` by quadrature."""
    x, w = gauss_legendre(order).mapped(0.0, basis.R)
    phi = basis_matrix(basis, K, x)
    return (phi * (w * weight(basis, x))[:, None]).T @ phi
