"""Observation windows, point patterns, intensities and pair enumeration."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import _backend
from .errors import (
    ConfigurationError,
    DomainError,
    InvalidDimensionError,
    InvalidIntensityError,
    MissingIntensityError,
)

# Upper bound on grid cells per point in the pair search.
_CELLS_PER_POINT = 4


def sphere_surface_area(d: int) -> float:
    """Surface area of the unit sphere in R^d, ``2 pi^(d/2) / Gamma(d/2)``."""
    if int(d) != d or d < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {d!r}")
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class ObservationWindow:
    """Axis-aligned box ``[lower_1, upper_1] x ... x [lower_d, upper_d]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(x) for x in np.atleast_1d(self.lower))
        upper = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lower) != len(upper) or len(lower) == 0:
            raise InvalidDimensionError("lower and upper must have the same positive length")
        for lo, hi in zip(lower, upper):
            if not (math.isfinite(lo) and math.isfinite(hi)) or not hi > lo:
                raise DomainError(f"window needs upper > lower on every axis, got {lower} / {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit_square(cls, side: float = 1.0) -> "ObservationWindow":
        return cls((0.0, 0.0), (side, side))

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed-box membership for an ``(n, d)`` array."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def dilated(self, buffer: float) -> "ObservationWindow":
        return ObservationWindow(
            tuple(x - buffer for x in self.lower), tuple(x + buffer for x in self.upper)
        )

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


def edge_correction_factor(window: ObservationWindow, lag) -> np.ndarray | float:
    """Translation edge correction ``|W n W_h| / |W|`` for one lag or an ``(m, d)`` array.

    Clamps to 0 once any ``|h_i|`` reaches the side length.
    """
    h = np.asarray(lag, dtype=float)
    scalar = h.ndim == 1
    h = h.reshape(-1, window.d)
    sides = window.sides
    factor = np.prod(np.maximum(0.0, sides - np.abs(h)) / sides, axis=1)
    return float(factor[0]) if scalar else factor


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Points observed in a window, with optional per-point intensity values."""

    points: np.ndarray
    window: ObservationWindow
    intensities: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.window.d)
        if pts.ndim != 2 or pts.shape[1] != self.window.d:
            raise InvalidDimensionError(
                f"points must have shape (n, {self.window.d}), got {pts.shape}"
            )
        if not np.all(self.window.contains(pts)):
            raise DomainError("all points must lie inside the (closed) window")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.intensities is not None:
            lam = np.asarray(self.intensities, dtype=float).reshape(-1)
            if lam.shape[0] != pts.shape[0]:
                raise InvalidIntensityError("intensities must have one value per point")
            if not np.all(np.isfinite(lam) & (lam > 0)):
                raise InvalidIntensityError("intensities must be strictly positive")
            lam = lam.copy()
            lam.setflags(write=False)
            object.__setattr__(self, "intensities", lam)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.window.d

    def translated(self, shift) -> "PointPattern":
        shift = np.asarray(shift, dtype=float)
        win = ObservationWindow(
            tuple(np.add(self.window.lower, shift)), tuple(np.add(self.window.upper, shift))
        )
        return PointPattern(self.points + shift, win, self.intensities)


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise InvalidIntensityError(f"constant intensity must be positive, got {self.value}")


@dataclass(frozen=True)
class PerPoint:
    """Use the intensities stored on the pattern."""


@dataclass(frozen=True)
class EstimatedConstant:
    """``n / |W|`` for every point."""


IntensityModel = Constant | PerPoint | EstimatedConstant


def resolve_intensity(pattern: PointPattern, model: IntensityModel) -> np.ndarray:
    """Per-point intensity values for ``pattern`` under ``model``."""
    n = pattern.n
    if isinstance(model, Constant):
        return np.full(n, float(model.value))
    if isinstance(model, EstimatedConstant):
        rho = n / pattern.window.volume
        if n > 0 and not rho > 0:
            raise InvalidIntensityError("estimated intensity is not positive")
        return np.full(n, rho)
    if isinstance(model, PerPoint):
        if pattern.intensities is None:
            raise MissingIntensityError("per-point intensity requested but the pattern has none")
        lam = np.array(pattern.intensities, dtype=float)
        if not np.all(lam > 0):
            raise InvalidIntensityError("intensities must be strictly positive")
        return lam
    raise ConfigurationError(f"unknown intensity model {model!r}")


@dataclass(frozen=True)
class LagPair:
    i: int
    j: int
    distance: float
    lag: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class PairSet:
    """Ordered distinct pairs ``(i, j)`` sorted lexicographically.

    Both ``(i, j)`` and ``(j, i)`` are present for every qualifying pair.
    """

    i: np.ndarray
    j: np.ndarray
    dist: np.ndarray
    n_points: int
    lags: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.i.shape[0]

    def __iter__(self) -> Iterator[LagPair]:
        for a, b, r, h in zip(self.i, self.j, self.dist, self.lags):
            yield LagPair(int(a), int(b), float(r), tuple(float(x) for x in h))

    def subset(self, mask: np.ndarray) -> "PairSet":
        return PairSet(self.i[mask], self.j[mask], self.dist[mask], self.n_points, self.lags[mask])

    def reverse_index(self) -> np.ndarray:
        """Index of ``(j, i)`` for every pair ``(i, j)``."""
        keys = self.i * self.n_points + self.j
        rev = self.j * self.n_points + self.i
        return np.searchsorted(keys, rev)

    def incident(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (ptr, idx) listing the pairs that touch each point, by increasing distance."""
        ends = np.concatenate([self.i, self.j])
        idx = np.concatenate([np.arange(len(self)), np.arange(len(self))])
        order = np.lexsort((np.concatenate([self.dist, self.dist]), ends))
        ptr = np.zeros(self.n_points + 1, dtype=np.int64)
        np.cumsum(np.bincount(ends, minlength=self.n_points), out=ptr[1:])
        return ptr, idx[order].astype(np.int64)


def _cell_grid(points: np.ndarray, window: ObservationWindow, r_max: float):
    n, d = points.shape
    sides = window.sides
    # side >= r_max so neighbours live in the 3^d surrounding cells
    side = max(r_max, (window.volume / (_CELLS_PER_POINT * max(n, 1))) ** (1.0 / d))
    ncell = np.maximum(1, np.floor(sides / side)).astype(np.int64)
    width = sides / ncell
    cidx = np.floor((points - np.asarray(window.lower)) / width).astype(np.int64)
    cidx = np.clip(cidx, 0, ncell - 1)
    flat = np.zeros(n, dtype=np.int64)
    for ax in range(d):
        flat = flat * ncell[ax] + cidx[:, ax]
    total = int(np.prod(ncell))
    order = np.argsort(flat, kind="stable").astype(np.int64)
    cell_start = np.zeros(total + 1, dtype=np.int64)
    np.cumsum(np.bincount(flat, minlength=total), out=cell_start[1:])
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
    return order, cell_start, flat, ncell, offsets


def enumerate_pairs(pattern: PointPattern, r_min: float, r_max: float) -> PairSet:
    """All ordered distinct pairs with ``r_min < |x_j - x_i| < r_max``.

    Uses a uniform cell grid with cells no smaller than ``r_max``.
    """
    if not (r_min >= 0 and r_max > r_min):
        raise DomainError(f"need 0 <= r_min < r_max, got {r_min}, {r_max}")
    pts = pattern.points
    n, d = pts.shape
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return PairSet(empty, empty.copy(), np.zeros(0), n, np.zeros((0, d)))
    order, cell_start, flat, ncell, offsets = _cell_grid(pts, pattern.window, r_max)
    ui, uj, ud = _backend.kernels.upper_pairs(
        np.ascontiguousarray(pts), order, cell_start, flat, ncell, offsets,
        float(r_min), float(r_max),
    )
    i = np.concatenate([ui, uj])
    j = np.concatenate([uj, ui])
    dist = np.concatenate([ud, ud])
    perm = np.lexsort((j, i))
    i, j, dist = i[perm], j[perm], dist[perm]
    return PairSet(i, j, dist, n, pts[j] - pts[i])


def brute_force_pairs(pattern: PointPattern, r_min: float, r_max: float) -> list[tuple[int, int, float]]:
    """O(n^2) reference enumeration, for testing."""
    out = []
    pts = pattern.points
    for a in range(pattern.n):
        for b in range(pattern.n):
            if a == b:
                continue
            r = float(np.sqrt(np.sum((pts[b] - pts[a]) ** 2)))
            if r_min < r < r_max:
                out.append((a, b, r))
    return out


def read_pattern_csv(path: str | Path, window: ObservationWindow) -> PointPattern:
    """Read ``x,y[,z][,intensity]`` CSV into a pattern on ``window``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise ConfigurationError(f"{path}: empty file") from None
        coord_names = ["x", "y", "z"][: window.d]
        if header[: window.d] != coord_names:
            raise ConfigurationError(
                f"{path}: header must start with {','.join(coord_names)}, got {','.join(header)}"
            )
        extra = header[window.d:]
        if extra not in ([], ["intensity"]):
            raise ConfigurationError(f"{path}: unexpected columns {extra}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ConfigurationError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: non-numeric field in {row}") from None
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    lam = data[:, window.d] if extra else None
    try:
        return PointPattern(data[:, : window.d], window, lam)
    except (DomainError, InvalidIntensityError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def write_pattern_csv(path: str | Path, pattern: PointPattern) -> None:
    names = ["x", "y", "z"][: pattern.d]
    with_lam = pattern.intensities is not None
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(names + (["intensity"] if with_lam else [])) + "\n")
        for k, p in enumerate(pattern.points):
            vals = list(p) + ([pattern.intensities[k]] if with_lam else [])
            fh.write(",".join(format_float(v) for v in vals) + "\n")


def format_float(x: float) -> str:
    """17 significant digits, round-trip exact."""
    return f"{float(x):.17g}"


