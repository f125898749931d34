"""Bessel functions of the first kind, their zeros, and Gauss-Legendre rules."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Below this argument the ascending series is used, above it Hankel's expansion.
SERIES_CUTOFF = 12.0
_SERIES_TERMS = 48
_ASYMPTOTIC_TERMS = 40


def _series(nu: float, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = np.power(half, nu) / math.gamma(nu + 1.0) if nu != 0 else np.ones_like(x)
    total = term.copy()
    q = half * half
    for m in range(1, _SERIES_TERMS):
        term = -term * q / (m * (m + nu))
        total += term
    return total


def _hankel(nu: float, x: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    prev = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(_ASYMPTOTIC_TERMS):
        # stop each x at its smallest term (optimal truncation)
        active &= np.abs(term) < np.abs(prev)
        contrib = np.where(active, term, 0.0)
        if k % 4 == 0:
            p += contrib
        elif k % 4 == 1:
            q += contrib
        elif k % 4 == 2:
            p -= contrib
        else:
            q -= contrib
        prev = term
        term = term * (mu - (2 * k + 1) ** 2) / ((k + 1) * 8.0 * x)
        if not active.any():
            break
    chi = x - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j(nu: float, x):
    """Bessel function of the first kind ``J_nu(x)`` for ``x >= 0``.

    Orders -1/2 and 1/2 use their elementary closed forms; other orders use
    the ascending series below ``SERIES_CUTOFF`` and Hankel's asymptotic
    expansion above it.  Accurate to about 1e-12 absolute on [0, 200].
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(np.isnan(xa)):
        raise DomainError("bessel_j is defined here for x >= 0 only")
    if nu < -0.5:
        raise DomainError(f"unsupported order {nu}")
    flat = np.atleast_1d(xa).ravel()
    out = np.empty_like(flat)
    if nu in (-0.5, 0.5):
        with np.errstate(divide="ignore", invalid="ignore"):
            amp = np.sqrt(2.0 / (math.pi * flat))
            out[:] = amp * (np.cos(flat) if nu < 0 else np.sin(flat))
        if nu > 0:
            out[flat == 0] = 0.0
    else:
        small = flat < SERIES_CUTOFF
        if small.any():
            out[small] = _series(nu, flat[small])
        if (~small).any():
            out[~small] = _hankel(nu, flat[~small])
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


def bessel_j_derivative(nu: float, x):
    """``J_nu'(x) = (nu / x) J_nu(x) - J_{nu+1}(x)``."""
    xa = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return nu / xa * bessel_j(nu, xa) - bessel_j(nu + 1.0, xa)


def _mcmahon(nu: float, k: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    beta = (k + 0.5 * nu - 0.25) * math.pi
    e = 8.0 * beta
    return beta - (mu - 1.0) / e - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * e**3)


def bessel_j_roots(nu: float, count: int) -> np.ndarray:
    """First ``count`` positive zeros of ``J_nu``, increasing.

    Each root is bracketed in the window of width pi around its McMahon
    estimate and refined by Newton's method, falling back to bisection
    whenever a Newton step leaves the bracket.
    """
    count = int(count)
    if count < 1 or count > 10_000:
        raise DomainError(f"count must lie in [1, 10000], got {count}")
    k = np.arange(1, count + 1, dtype=float)
    if nu == -0.5:
        return (k - 0.5) * math.pi
    if nu == 0.5:
        return k * math.pi
    guess = _mcmahon(nu, k)
    lo = np.maximum(guess - 0.5 * math.pi, 1e-3)
    hi = guess + 0.5 * math.pi
    f_lo = bessel_j(nu, lo)
    x = guess.copy()
    for _ in range(100):
        fx = bessel_j(nu, x)
        # keep the bracket [lo, hi] around the sign change
        left = np.sign(fx) == np.sign(f_lo)
        lo = np.where(left, x, lo)
        f_lo = np.where(left, fx, f_lo)
        hi = np.where(left, hi, x)
        step = fx / bessel_j_derivative(nu, x)
        new = x - step
        outside = ~((new > lo) & (new < hi)) | ~np.isfinite(new)
        new = np.where(outside, 0.5 * (lo + hi), new)
        done = np.abs(new - x) <= 1e-15 * np.abs(x)
        x = new
        if done.all():
            break
    return x


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on (-1, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def mapped(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights transformed to the interval (a, b)."""
        half = 0.5 * (b - a)
        return a + half * (self.nodes + 1.0), half * self.weights

    def integrate(self, f, a: float, b: float) -> float:
        x, w = self.mapped(a, b)
        return float(np.dot(w, f(x)))


@functools.lru_cache(maxsize=None)
def gauss_legendre(order: int) -> QuadratureRule:
    """Gauss-Legendre rule of the given order, exact for degree ``2 * order - 1``."""
    order = int(order)
    if order < 2 or order > 512:
        raise DomainError(f"quadrature order must lie in [2, 512], got {order}")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, order)
