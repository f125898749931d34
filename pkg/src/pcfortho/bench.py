"""Monte Carlo comparison of pair correlation function estimators.

Each replicate simulates (or loads) one pattern, runs every estimator in the
roster on a shared lag grid, and returns its curves.  Aggregation is by
replicate id, so results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .basis import BESSEL, COSINE, BasisSpec
from .core import (
    Constant,
    EstimatedConstant,
    ObservationWindow,
    PointPattern,
    enumerate_pairs,
    format_float,
    read_pattern_csv,
    resolve_intensity,
    sphere_surface_area,
)
from .errors import ConfigurationError, InsufficientSampleError, PcfError
from .kernel_est import (
    EPANECHNIKOV,
    KernelPairs,
    KernelSpec,
    StoyanDefault,
    Illian,
    cv_bandwidth,
    default_cv_grid,
    rule_bandwidth,
)
from .ortho_est import (
    CENTRED,
    REFINED,
    SIMPLE,
    TUNINGS,
    WAHBA,
    default_variant,
    estimate_coefficients,
    fit_smoothing,
    select_cutoff,
    series_values,
    tuning_coefficients,
)
from .simulate import (
    VAR_GAMMA_LAW,
    DppGauss,
    VarGammaCluster,
    model_from_dict,
    model_to_dict,
    reference_pcf,
    sample_replicate,
)

BASELINE = "kernel-k"
DEFAULT_ROSTER = (
    "kernel-k", "kernel-d", "kernel-c",
    "ortho-bessel-simple", "ortho-bessel-refined", "ortho-bessel-wahba",
    "ortho-cosine-simple", "ortho-cosine-refined", "ortho-cosine-wahba",
)
_KERNEL_DEFAULT_BW = {"k": "stoyan", "d": "stoyan", "c": "cv"}


# configuration -------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorSpec:
    """Parsed roster entry.

    Names are ``kernel-{k,d,c}[:{stoyan,illian,cv,fixed=<b>}]``,
    ``ortho-{bessel,cosine}-{simple,refined,wahba}`` or ``oracle`` (the true
    curve, for harness checks).
    """

    name: str
    family: str
    kind: str = ""
    bandwidth: str = ""
    basis: str = ""
    scheme: str = ""

    @classmethod
    def parse(cls, name: str) -> "EstimatorSpec":
        if name == "oracle":
            return cls(name, "oracle")
        head, _, bw = name.partition(":")
        parts = head.split("-")
        if len(parts) == 2 and parts[0] == "kernel" and parts[1] in _KERNEL_DEFAULT_BW:
            bw = bw or _KERNEL_DEFAULT_BW[parts[1]]
            if bw not in ("stoyan", "illian", "cv") and not bw.startswith("fixed="):
                raise ConfigurationError(f"estimators: unknown bandwidth rule {bw!r} in {name!r}")
            return cls(name, "kernel", kind=parts[1], bandwidth=bw)
        if (len(parts) == 3 and parts[0] == "ortho" and parts[1] in (BESSEL, COSINE)
                and parts[2] in (SIMPLE, REFINED, WAHBA) and not bw):
            return cls(name, "ortho", basis=parts[1], scheme=parts[2])
        raise ConfigurationError(f"estimators: unknown estimator {name!r}")


_CONFIG_KEYS = {
    "model", "window", "n_sim", "R", "r_min", "estimators", "grid_size", "small_lag_upper",
    "moment_r", "seed", "K_max", "intensity", "kernel", "cv_grid", "pattern_dir", "upper_limit",
    "tuning",
}


@dataclass(frozen=True)
class StudyConfig:
    model: object
    window: ObservationWindow
    n_sim: int
    R: tuple[float, ...] = (0.06,)
    r_min: float = 1e-3
    estimators: tuple[str, ...] = DEFAULT_ROSTER
    grid_size: int = 512
    small_lag_upper: float = 0.025
    moment_r: tuple[float, ...] = (0.025, 0.1)
    seed: int = 1
    K_max: int = 49
    intensity: str = "true"
    kernel: str = EPANECHNIKOV
    cv_grid: tuple[float, ...] = field(default_factory=default_cv_grid)
    pattern_dir: str | None = None
    upper_limit: str = "R"
    tuning: str = CENTRED

    def __post_init__(self):
        if self.n_sim < 2:
            raise ConfigurationError(f"n_sim: need at least 2 replicates, got {self.n_sim}")
        if not self.R or any(not r > 0 for r in self.R):
            raise ConfigurationError("R: need one or more positive lag ranges")
        if not self.r_min >= 0:
            raise ConfigurationError("r_min: must be non-negative")
        if self.intensity not in ("true", "estimated"):
            raise ConfigurationError(f"intensity: expected 'true' or 'estimated', got {self.intensity!r}")
        if self.grid_size < 8:
            raise ConfigurationError("grid_size: need at least 8 points")
        if not self.r_min < self.small_lag_upper <= self.r_min + min(self.R):
            raise ConfigurationError("small_lag_upper: must lie in (r_min, r_min + R]")
        if self.upper_limit not in ("R", "rmin+R"):
            raise ConfigurationError(f"upper_limit: expected 'R' or 'rmin+R', got {self.upper_limit!r}")
        if self.tuning not in TUNINGS:
            raise ConfigurationError(f"tuning: expected one of {TUNINGS}, got {self.tuning!r}")
        if self.kernel not in ("epanechnikov", "uniform"):
            raise ConfigurationError(f"kernel: unknown kernel {self.kernel!r}")
        if self.K_max < 2:
            raise ConfigurationError("K_max: must be at least 2")
        for name in self.estimators:
            spec = EstimatorSpec.parse(name)
            if spec.family == "ortho" and spec.basis == COSINE and self.r_min <= 0:
                raise ConfigurationError("r_min: the cosine basis needs r_min > 0")
        if isinstance(self.model, DppGauss) and not self.pattern_dir:
            raise ConfigurationError("pattern_dir: determinantal studies need pre-simulated patterns")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "StudyConfig":
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for key in ("model", "window", "n_sim"):
            if key not in doc:
                raise ConfigurationError(f"{key}: required")
        kw = dict(doc)
        kw["model"] = model_from_dict(doc["model"])
        win = doc["window"]
        if not isinstance(win, dict) or set(win) != {"lower", "upper"}:
            raise ConfigurationError("window: expected an object with keys 'lower' and 'upper'")
        try:
            kw["window"] = ObservationWindow(tuple(win["lower"]), tuple(win["upper"]))
        except (PcfError, TypeError) as exc:
            raise ConfigurationError(f"window: {exc}") from None
        if "R" in kw:
            kw["R"] = tuple(float(x) for x in np.atleast_1d(kw["R"]))
        for key in ("estimators", "moment_r"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "cv_grid" in kw:
            g = kw["cv_grid"]
            if isinstance(g, dict):
                extra = set(g) - {"lo", "hi", "n"}
                if extra:
                    raise ConfigurationError(f"cv_grid: unknown keys {sorted(extra)}")
                kw["cv_grid"] = default_cv_grid(int(g.get("n", 20)), float(g.get("lo", 0.005)), float(g.get("hi", 0.1)))
            else:
                kw["cv_grid"] = tuple(float(b) for b in g)
        if kw.get("pattern_dir") and base_dir is not None:
            kw["pattern_dir"] = str((base_dir / kw["pattern_dir"]).resolve())
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["model"] = model_to_dict(self.model)
        out["window"] = self.window.to_dict()
        for key in ("R", "estimators", "moment_r", "cv_grid"):
            out[key] = list(out[key])
        return out


# per-replicate work ----------------------------------------------------------

def eval_grid(config: StudyConfig, R: float) -> np.ndarray:
    """``grid_size`` equispaced points strictly inside (r_min, r_min + R)."""
    return np.linspace(config.r_min, config.r_min + R, config.grid_size + 2)[1:-1]


def moment_points(config: StudyConfig, R: float) -> np.ndarray:
    return np.array([r for r in config.moment_r if config.r_min < r < config.r_min + R])


def load_replicate(config: StudyConfig, rep: int) -> PointPattern:
    if config.pattern_dir:
        files = pattern_files(config.pattern_dir)
        if rep >= len(files):
            raise ConfigurationError(f"pattern_dir: {len(files)} files for {config.n_sim} replicates")
        return read_pattern_csv(files[rep], config.window)
    return sample_replicate(config.model, config.window, config.seed, rep)


def pattern_files(directory: str) -> list[Path]:
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise ConfigurationError(f"pattern_dir: no CSV files in {directory}")
    return files


def _run_kernel(spec, pattern, rho, r, config, R, pairs):
    kernel = config.kernel
    if spec.bandwidth == "cv":
        res = cv_bandwidth(pattern, None, spec.kind, R, config.cv_grid, kernel,
                           config.r_min, rho=rho)
        b = res.bandwidth
    elif spec.bandwidth.startswith("fixed="):
        b = float(spec.bandwidth.split("=", 1)[1])
    else:
        rule = StoyanDefault() if spec.bandwidth == "stoyan" else Illian()
        b = rule_bandwidth(rule, pattern)
    kspec = KernelSpec(kernel, b)
    reach = float(r.max()) + b
    usable = pairs if pairs is not None and reach <= pairs_reach(config) else None
    kp = KernelPairs.build(pattern, rho, reach, config.r_min, pairs=usable)
    return kp.evaluate(spec.kind, kspec, r), {"b": b}


def _run_ortho(spec, pattern, rho, r, config, R, pairs, basis_cache):
    basis = basis_cache[(spec.basis, R)]
    coeffs = basis_cache.get(("coeffs", spec.basis, R))
    if coeffs is None:
        coeffs = estimate_coefficients(pattern, None, basis, config.K_max + 1, pairs=pairs, rho=rho)
        basis_cache[("coeffs", spec.basis, R)] = coeffs
    variant = default_variant(basis)
    tuned = tuning_coefficients(coeffs, variant, config.tuning, config.upper_limit)
    K_hat = select_cutoff(tuned, config.K_max)
    scheme = fit_smoothing(tuned, spec.scheme, K_hat)
    values = series_values(coeffs, scheme, r, variant, config.upper_limit)
    return values, scheme.describe()


def run_replicate(config: StudyConfig, rep: int, bases: dict | None = None) -> dict:
    """Curves of every estimator for replicate ``rep``, keyed by ``(R, name)``.

    Failed estimators map to ``{"error": message}``.
    """
    pattern = load_replicate(config, rep)
    if config.intensity == "true":
        rho = resolve_intensity(pattern, Constant(config.model.intensity))
    else:
        rho = resolve_intensity(pattern, EstimatedConstant())
    specs = [EstimatorSpec.parse(n) for n in config.estimators]
    pairs = enumerate_pairs(pattern, config.r_min, pairs_reach(config))
    bases = bases if bases is not None else make_bases(config)
    cache = dict(bases)
    out = {}
    for R in config.R:
        r = np.concatenate([eval_grid(config, R), moment_points(config, R)])
        for spec in specs:
            try:
                if spec.family == "oracle":
                    vals, info = reference_pcf(config.model, r, config.window.d), {}
                elif spec.family == "kernel":
                    vals, info = _run_kernel(spec, pattern, rho, r, config, R, pairs)
                else:
                    vals, info = _run_ortho(spec, pattern, rho, r, config, R, pairs, cache)
                if not np.all(np.isfinite(vals)):
                    raise FloatingPointError("non-finite estimate")
                out[(R, spec.name)] = {"values": np.asarray(vals, dtype=float), **info}
            except (PcfError, FloatingPointError, ZeroDivisionError) as exc:
                out[(R, spec.name)] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def pairs_reach(config: StudyConfig) -> float:
    """Largest lag any default-rule estimator needs, so pairs are enumerated once."""
    return max(config.r_min + R for R in config.R) + max(max(config.cv_grid), 0.05)


def make_bases(config: StudyConfig) -> dict:
    return {
        (kind, R): BasisSpec(kind, R, config.r_min, config.window.d)
        for kind in (BESSEL, COSINE)
        for R in config.R
        if kind == BESSEL or config.r_min > 0
    }


def _worker(args):
    config, rep = args
    return run_replicate(config, rep)


# summaries --------------------------------------------------------------------

@dataclass(frozen=True)
class MomentSummary:
    mean: float
    sd: float
    skewness: float
    kurtosis: float
    zero_variance: bool = False


def moment_summaries(samples) -> MomentSummary:
    """Mean, SD (n - 1 divisor), skewness ``m3 / m2^1.5`` and non-excess kurtosis ``m4 / m2^2``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 4:
        raise InsufficientSampleError(f"moment summaries need at least 4 values, got {x.size}")
    mean = float(np.mean(x))
    dev = x - mean
    m2 = float(np.mean(dev**2))
    if m2 == 0.0:
        return MomentSummary(mean, 0.0, 0.0, 0.0, True)
    m3 = float(np.mean(dev**3))
    m4 = float(np.mean(dev**4))
    sd = math.sqrt(m2 * x.size / (x.size - 1))
    return MomentSummary(mean, sd, m3 / m2**1.5, m4 / m2**2)


def log_relative_efficiency(mise_baseline: float, mise: float) -> float:
    if mise == 0.0:
        return math.inf
    return math.log(mise_baseline / mise)


def _interval_trapezoid(y, x, a, c):
    """Row-wise trapezoid integral of ``y`` over ``[a, c]``.

    ``x`` is the open evaluation grid, so the end values at ``a`` and ``c`` are
    linear inter/extrapolations; dropping the end cells would cost O(h).
    """
    y = np.atleast_2d(y)

    def at(t):
        m = int(np.clip(np.searchsorted(x, t) - 1, 0, x.size - 2))
        lam = (t - x[m]) / (x[m + 1] - x[m])
        return (1.0 - lam) * y[:, m] + lam * y[:, m + 1]

    inside = (x > a) & (x < c)
    xs = np.concatenate([[a], x[inside], [c]])
    ys = np.column_stack([at(a), y[:, inside], at(c)])
    return np.sum(0.5 * (ys[:, 1:] + ys[:, :-1]) * np.diff(xs), axis=1)


@dataclass
class StudyResult:
    config: StudyConfig
    mise: list = field(default_factory=list)  # (R, estimator, interval, mise, e_I, n_used)
    moments: list = field(default_factory=list)  # (R, r, estimator, MomentSummary)
    curves: list = field(default_factory=list)  # (R, estimator, r array, mean, sd, truth)
    khat: list = field(default_factory=list)  # (R, estimator, K, count)
    exclusions: dict = field(default_factory=dict)  # (R, estimator) -> count
    errors: list = field(default_factory=list)  # (replicate, R, estimator, message)
    samples: dict = field(default_factory=dict, repr=False)  # (R, estimator, r) -> array

    def mise_of(self, estimator: str, interval: str, R: float | None = None) -> tuple[float, float]:
        R = self.config.R[0] if R is None else R
        for row in self.mise:
            if row[0] == R and row[1] == estimator and row[2] == interval:
                return row[3], row[4]
        raise KeyError((R, estimator, interval))

    def moment_of(self, estimator: str, r: float, R: float | None = None) -> MomentSummary:
        R = self.config.R[0] if R is None else R
        for row in self.moments:
            if row[0] == R and row[1] == r and row[2] == estimator:
                return row[3]
        raise KeyError((R, estimator, r))

    def write(self, outdir: str | Path, svg: bool = False) -> list[Path]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        f = format_float
        written = []

        def table(name, header, rows):
            path = out / name
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
            written.append(path)

        table("mise.csv", ["R", "estimator", "interval", "mise", "e_I", "n_used"],
              [[f(R), e, i, f(m), _fmt_eff(ei), n] for R, e, i, m, ei, n in self.mise])
        table("moments.csv", ["R", "r", "estimator", "mean", "sd", "skew", "kurt", "zero_variance"],
              [[f(R), f(r), e, f(s.mean), f(s.sd), f(s.skewness), f(s.kurtosis), int(s.zero_variance)]
               for R, r, e, s in self.moments])
        rows = []
        for R, e, r, mean, sd, truth in self.curves:
            rows.extend([f(R), e, f(a), f(b), f(c), f(t)] for a, b, c, t in zip(r, mean, sd, truth))
        table("curves_mean.csv", ["R", "estimator", "r", "mean", "sd", "g_true"], rows)
        table("khat.csv", ["R", "estimator", "K", "count"],
              [[f(R), e, k, c] for R, e, k, c in self.khat])
        table("exclusions.csv", ["R", "estimator", "excluded"],
              [[f(R), e, c] for (R, e), c in sorted(self.exclusions.items())])
        if svg:
            written.extend(plot_envelopes(self, out))
        return written


def _fmt_eff(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format_float(x)


def aggregate(config: StudyConfig, replicates: list[dict]) -> StudyResult:
    """Combine per-replicate curves in replicate-id order."""
    res = StudyResult(config)
    sa = sphere_surface_area(config.window.d)
    intervals = {
        "small": lambda R: config.small_lag_upper,
        "all": lambda R: config.r_min + R,
    }
    for R in config.R:
        grid = eval_grid(config, R)
        mpts = moment_points(config, R)
        truth_grid = reference_pcf(config.model, grid, config.window.d)
        ng = grid.shape[0]
        mise_rows = {}
        for name in config.estimators:
            ok = []
            ks = []
            for rep, out in enumerate(replicates):
                entry = out[(R, name)]
                if "error" in entry:
                    res.errors.append((rep, R, name, entry["error"]))
                    continue
                ok.append(entry["values"])
                if "K" in entry:
                    ks.append(entry["K"])
            res.exclusions[(R, name)] = len(replicates) - len(ok)
            if not ok:
                for interval in intervals:
                    mise_rows[(name, interval)] = (math.nan, 0)
                continue
            vals = np.vstack(ok)
            on_grid = vals[:, :ng]
            for interval, upper in intervals.items():
                sq = (on_grid - truth_grid) ** 2
                ise = _interval_trapezoid(sq, grid, config.r_min, upper(R))
                mise_rows[(name, interval)] = (sa * float(np.mean(ise)), len(ok))
            mean = on_grid.mean(axis=0)
            sd = on_grid.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(ng)
            res.curves.append((R, name, grid, mean, sd, truth_grid))
            for m, r in enumerate(mpts):
                col = vals[:, ng + m]
                res.samples[(R, name, float(r))] = col
                if col.size >= 4:
                    res.moments.append((R, float(r), name, moment_summaries(col)))
            if ks:
                uniq, counts = np.unique(ks, return_counts=True)
                res.khat.extend((R, name, int(k), int(c)) for k, c in zip(uniq, counts))
        for name in config.estimators:
            for interval in intervals:
                m, n = mise_rows[(name, interval)]
                base = mise_rows.get((BASELINE, interval), (math.nan, 0))[0]
                eff = log_relative_efficiency(base, m) if not math.isnan(m) and not math.isnan(base) else math.nan
                res.mise.append((R, name, interval, m, eff, n))
    return res


def run_study(config: StudyConfig, threads: int = 1, replicate_order=None) -> StudyResult:
    """Run all replicates (in a process pool when ``threads > 1``) and aggregate.

    ``replicate_order`` permutes the processing order; the result is unchanged.
    """
    order = list(range(config.n_sim)) if replicate_order is None else list(replicate_order)
    if sorted(order) != list(range(config.n_sim)):
        raise ConfigurationError("replicate_order must be a permutation of the replicate ids")
    if config.pattern_dir:
        files = pattern_files(config.pattern_dir)
        if len(files) < config.n_sim:
            raise ConfigurationError(
                f"pattern_dir: {len(files)} pattern files for n_sim={config.n_sim}")
        for path in files[: config.n_sim]:
            read_pattern_csv(path, config.window)  # fail early, naming the file
    results: dict[int, dict] = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            chunk = max(1, len(order) // (4 * threads))
            for rep, out in zip(order, ex.map(_worker, [(config, r) for r in order], chunksize=chunk)):
                results[rep] = out
    else:
        bases = make_bases(config)
        for rep in order:
            results[rep] = run_replicate(config, rep, bases)
    return aggregate(config, [results[i] for i in range(config.n_sim)])


def plot_envelopes(result: StudyResult, outdir: Path) -> list[Path]:
    """Mean +/- SD envelopes per estimator, one SVG per R."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for R in result.config.R:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        truth_drawn = False
        for R_, name, r, mean, sd, truth in result.curves:
            if R_ != R:
                continue
            if not truth_drawn:
                ax.plot(r, truth, color="k", lw=1.5, label="true g")
                truth_drawn = True
            (line,) = ax.plot(r, mean, lw=1, label=name)
            ax.fill_between(r, mean - sd, mean + sd, color=line.get_color(), alpha=0.15)
        ax.set_xlabel("r")
        ax.set_ylabel("g(r)")
        ax.legend(fontsize=7)
        path = outdir / f"envelopes_R{R:g}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def manifest(config: StudyConfig, command: str, extra: dict | None = None) -> dict:
    doc = {
        "tool": "pcfortho",
        "version": __version__,
        "backend": BACKEND,
        "command": command,
        "seed": config.seed,
        "config": config.to_dict(),
    }
    if isinstance(config.model, VarGammaCluster):
        doc["displacement_law"] = VAR_GAMMA_LAW
    doc.update(extra or {})
    return doc


def write_manifest(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def default_threads() -> int:
    env = os.environ.get("PCF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"PCF_THREADS must be an integer, got {env!r}") from None
    return 1
