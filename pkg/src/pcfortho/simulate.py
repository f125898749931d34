"""Point process samplers and reference pair correlation functions."""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .core import ObservationWindow, PointPattern
from .errors import ConfigurationError, DomainError
from .specialfun import gauss_legendre

# Offspring mass allowed to fall outside the dilated parent window.
TRUNCATION_MASS = 1e-6
_BUFFER_DRAWS = 1_000_000
_BUFFER_SEED = 20240501
VAR_GAMMA_LAW = "sqrt(V) Z, Z ~ N(0, I_d), V ~ Gamma(shape = nu + d/2, scale = 2 omega^2)"


@dataclass(frozen=True)
class RngStream:
    """Replicate-indexed random stream: ``(seed, stream)`` fixes every draw."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))


def _positive(**kw):
    for name, val in kw.items():
        if not (val > 0 and math.isfinite(val)):
            raise ConfigurationError(f"{name} must be positive, got {val}")


@dataclass(frozen=True)
class Poisson:
    rho: float

    def __post_init__(self):
        _positive(rho=self.rho)

    @property
    def intensity(self) -> float:
        return self.rho


@dataclass(frozen=True)
class Thomas:
    """Neyman-Scott process with isotropic Gaussian offspring displacements.

    ``sigma`` is the per-coordinate displacement standard deviation.
    """

    kappa: float
    mu: float
    sigma: float

    def __post_init__(self):
        _positive(kappa=self.kappa, sigma=self.sigma)
        if not self.mu >= 0:
            raise ConfigurationError(f"mu must be non-negative, got {self.mu}")

    @property
    def intensity(self) -> float:
        return self.kappa * self.mu


@dataclass(frozen=True)
class VarGammaCluster:
    """Neyman-Scott process with Variance-Gamma displacements of shape ``nu``, scale ``omega``."""

    kappa: float
    mu: float
    nu: float
    omega: float

    def __post_init__(self):
        _positive(kappa=self.kappa, omega=self.omega)
        if not self.mu >= 0:
            raise ConfigurationError(f"mu must be non-negative, got {self.mu}")

    @property
    def intensity(self) -> float:
        return self.kappa * self.mu


@dataclass(frozen=True)
class DppGauss:
    """Determinantal process with Gaussian kernel; reference curve only."""

    rho: float
    alpha: float

    def __post_init__(self):
        _positive(rho=self.rho, alpha=self.alpha)

    @property
    def intensity(self) -> float:
        return self.rho


ProcessModel = Poisson | Thomas | VarGammaCluster | DppGauss
MODELS = {"poisson": Poisson, "thomas": Thomas, "vargamma": VarGammaCluster, "dpp_gauss": DppGauss}


def model_name(model: ProcessModel) -> str:
    for name, cls in MODELS.items():
        if isinstance(model, cls):
            return name
    raise ConfigurationError(f"unknown model {model!r}")


def model_to_dict(model: ProcessModel) -> dict:
    return {"name": model_name(model), **asdict(model)}


def model_from_dict(spec: dict) -> ProcessModel:
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in MODELS:
        raise ConfigurationError(f"model.name: unknown model {name!r}, expected one of {sorted(MODELS)}")
    cls = MODELS[name]
    fields = set(cls.__dataclass_fields__)
    unknown = set(spec) - fields
    if unknown:
        raise ConfigurationError(f"model: unknown keys {sorted(unknown)} for {name}")
    missing = fields - set(spec)
    if missing:
        raise ConfigurationError(f"model: missing keys {sorted(missing)} for {name}")
    try:
        return cls(**{k: float(v) for k, v in spec.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"model: {exc}") from None


def sample_poisson(window: ObservationWindow, rho: float, rng: np.random.Generator) -> PointPattern:
    """Homogeneous Poisson process with intensity ``rho`` on ``window``."""
    _positive(rho=rho)
    n = rng.poisson(rho * window.volume)
    pts = rng.uniform(window.lower, window.upper, size=(n, window.d))
    return PointPattern(pts, window)


def sample_cluster(window: ObservationWindow, kappa: float, mu: float, displacement, buffer: float,
                   rng: np.random.Generator) -> PointPattern:
    """Neyman-Scott process; ``displacement(m, rng)`` returns an ``(m, d)`` array.

    Parents are Poisson(kappa) on the window dilated by ``buffer``; offspring
    falling outside ``window`` are discarded.
    """
    if not (buffer >= 0 and math.isfinite(buffer)):
        raise ConfigurationError(f"cluster buffer must be finite and non-negative, got {buffer}")
    big = window.dilated(buffer)
    n_par = rng.poisson(kappa * big.volume)
    parents = rng.uniform(big.lower, big.upper, size=(n_par, window.d))
    counts = rng.poisson(mu, size=n_par) if mu > 0 else np.zeros(n_par, dtype=int)
    centers = np.repeat(parents, counts, axis=0)
    pts = centers + displacement(centers.shape[0], rng)
    return PointPattern(pts[window.contains(pts)], window)


def var_gamma_displacement(nu: float, omega: float, d: int, rng: np.random.Generator, size=None):
    """Variance-Gamma displacement as a normal variance mixture.

    ``X = sqrt(V) Z`` with ``Z`` standard normal in R^d and
    ``V ~ Gamma(shape = nu + d/2, scale = 2 omega^2)``, whose density is
    proportional to ``|x|^nu K_nu(|x| / omega)``.
    """
    shape = nu + d / 2.0
    if shape <= 0:
        raise DomainError(f"Variance-Gamma shape needs nu > -d/2, got nu={nu}, d={d}")
    m = 1 if size is None else int(size)
    v = rng.gamma(shape, 2.0 * omega * omega, size=m)
    out = np.sqrt(v)[:, None] * rng.standard_normal((m, d))
    return out[0] if size is None else out


@functools.lru_cache(maxsize=None)
def var_gamma_buffer(nu: float, omega: float, d: int) -> float:
    """Empirical ``1 - 1e-6`` quantile of the displacement radius (fixed internal seed)."""
    rng = np.random.Generator(np.random.PCG64(_BUFFER_SEED))
    radius = np.linalg.norm(var_gamma_displacement(nu, omega, d, rng, _BUFFER_DRAWS), axis=1)
    q = float(np.quantile(radius, 1.0 - TRUNCATION_MASS))
    if not (q > 0 and math.isfinite(q)):
        raise ConfigurationError("Variance-Gamma edge buffer did not converge")
    return q


def thomas_buffer(sigma: float) -> float:
    return 6.0 * sigma


def sample(model: ProcessModel, window: ObservationWindow, rng: np.random.Generator) -> PointPattern:
    if isinstance(model, Poisson):
        return sample_poisson(window, model.rho, rng)
    if isinstance(model, Thomas):
        sig = model.sigma
        d = window.d
        return sample_cluster(window, model.kappa, model.mu,
                              lambda m, g: sig * g.standard_normal((m, d)),
                              thomas_buffer(sig), rng)
    if isinstance(model, VarGammaCluster):
        d = window.d
        buf = var_gamma_buffer(model.nu, model.omega, d)
        return sample_cluster(window, model.kappa, model.mu,
                              lambda m, g: var_gamma_displacement(model.nu, model.omega, d, g, m),
                              buf, rng)
    if isinstance(model, DppGauss):
        raise ConfigurationError("determinantal processes have no sampler; supply pattern files")
    raise ConfigurationError(f"unknown model {model!r}")


def sample_replicate(model: ProcessModel, window: ObservationWindow, seed: int, replicate: int) -> PointPattern:
    return sample(model, window, RngStream(seed, replicate).generator())


@functools.lru_cache(maxsize=65536)
def _vg_convolution(nu: float, omega: float, d: int, r: float) -> float:
    # X1 - X2 is again a normal variance mixture with V ~ Gamma(2 nu + d, 2 omega^2)
    shape = 2.0 * nu + d
    theta = 2.0 * omega * omega

    def integrand(s):
        v = theta * s
        return (2.0 * math.pi * v) ** (-d / 2.0) * math.exp(-r * r / (2.0 * v) - s + (shape - 1.0) * math.log(s) - math.lgamma(shape))

    pieces = [0.0, 1e-8, 1e-4, 1e-2, 1.0, 10.0, np.inf]
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-11, limit=200)
        total += val
    return total


def reference_pcf(model: ProcessModel, r, d: int = 2):
    """Pair correlation function of ``model`` at lags ``r > 0``."""
    ra = np.asarray(r, dtype=float)
    if np.any(ra <= 0):
        raise DomainError("reference_pcf needs r > 0")
    if isinstance(model, Poisson):
        out = np.ones_like(ra)
    elif isinstance(model, DppGauss):
        out = 1.0 - np.exp(-2.0 * (ra / model.alpha) ** 2)
    elif isinstance(model, Thomas):
        s2 = model.sigma**2
        out = 1.0 + np.exp(-ra * ra / (4.0 * s2)) / (model.kappa * (4.0 * math.pi * s2) ** (d / 2.0))
    elif isinstance(model, VarGammaCluster):
        flat = [_vg_convolution(float(model.nu), float(model.omega), int(d), float(x)) for x in ra.ravel()]
        out = 1.0 + np.asarray(flat).reshape(ra.shape) / model.kappa
    else:
        raise ConfigurationError(f"unknown model {model!r}")
    return float(out) if np.ndim(r) == 0 else out


def self_convolution_2d(density, r, s_max: float, order: int = 256) -> np.ndarray:
    """``(f * f)(h)`` for a radial planar density ``f(|x|)`` by polar quadrature.

    The radial integral is split at ``s = |h|`` where the second factor peaks.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    rule = gauss_legendre(order)
    phi, wphi = rule.mapped(0.0, math.pi)
    out = np.empty_like(r)
    for m, h in enumerate(r):
        total = 0.0
        edges = [0.0, h, s_max] if 0 < h < s_max else [0.0, s_max]
        for a, b in zip(edges[:-1], edges[1:]):
            s, ws = rule.mapped(a, b)
            dist = np.sqrt(np.maximum(s[:, None] ** 2 + h * h - 2.0 * s[:, None] * h * np.cos(phi)[None, :], 0.0))
            inner = (density(dist) * wphi[None, :]).sum(axis=1) * 2.0
            total += float(np.dot(ws, s * density(s) * inner))
        out[m] = total
    return out
