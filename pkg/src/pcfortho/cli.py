"""Command-line interface: ``pcfortho {simulate,estimate,bench}``.

Exit codes: 0 success, 1 numeric failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .basis import BESSEL, COSINE, BasisSpec
from .bench import BASELINE, StudyConfig, default_threads, manifest, run_study, write_manifest
from .core import (
    Constant,
    EstimatedConstant,
    ObservationWindow,
    PerPoint,
    format_float,
    read_pattern_csv,
    resolve_intensity,
    write_pattern_csv,
)
from .errors import (
    ConfigurationError,
    DomainError,
    InvalidDimensionError,
    InvalidIntensityError,
    MissingIntensityError,
    PcfError,
)
from .kernel_est import (
    EPANECHNIKOV,
    UNIFORM,
    Illian,
    KernelSpec,
    StoyanDefault,
    cv_bandwidth,
    default_cv_grid,
    estimate_g,
    rule_bandwidth,
)
from .ortho_est import (
    CENTRED,
    K_MAX_DEFAULT,
    REFINED,
    SIMPLE,
    TUNINGS,
    WAHBA,
    estimate_coefficients,
    estimate_curve,
)
from .simulate import sample_replicate

log = logging.getLogger("pcfortho")

USAGE_ERRORS = (ConfigurationError, DomainError, InvalidDimensionError, MissingIntensityError,
                InvalidIntensityError, OSError, json.JSONDecodeError)

BENCH_OUTPUTS = """\
outputs (all numbers at 17 significant digits):
  mise.csv         R, estimator, interval (small | all), mise, e_I (log MISE ratio
                   against kernel-k; 'inf' when MISE is 0), n_used (replicates kept)
  moments.csv      R, r, estimator, mean, sd (n-1 divisor, across replicates),
                   skew (m3/m2^1.5), kurt (m4/m2^2, non-excess), zero_variance
  curves_mean.csv  R, estimator, r, mean, sd, g_true on the evaluation grid
  khat.csv         R, estimator, K, count (selected cut-off distribution)
  exclusions.csv   R, estimator, excluded (replicates where the estimator failed)
  manifest.json    full config, seed, tool version and backend
  envelopes_R*.svg mean +/- sd envelopes (with --svg)
"""


def _load_json(path: str) -> dict:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    # a manifest from an earlier run carries the config it was made from
    if "tool" in doc and "config" in doc:
        doc = doc["config"]
    return doc


def load_config(path: str, **overrides) -> StudyConfig:
    doc = _load_json(path)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig.from_dict(doc, base_dir=Path(path).resolve().parent)


def _prepare_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"cannot write to {path}: {exc.strerror or exc}") from None
    return out


def _threads(args) -> int:
    n = args.threads if args.threads is not None else default_threads()
    if n < 1:
        raise ConfigurationError("--threads must be at least 1")
    return n


# simulate ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = load_config(args.config, n_sim=args.n_sim, seed=args.seed)
    out = _prepare_dir(args.out)
    files = []
    for rep in range(config.n_sim):
        pattern = sample_replicate(config.model, config.window, config.seed, rep)
        path = out / f"pattern_{rep:04d}.csv"
        write_pattern_csv(path, pattern)
        files.append({"file": path.name, "n": pattern.n})
    sidecar = manifest(config, "simulate", {"files": files})
    write_manifest(out / "patterns.json", sidecar)
    write_manifest(out / "manifest.json", sidecar)
    print(f"wrote {len(files)} patterns to {out}")
    return 0


# estimate ----------------------------------------------------------------------

def _window_from_arg(text: str | None, d: int) -> ObservationWindow:
    if text is None:
        return ObservationWindow((0.0,) * d, (1.0,) * d)
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"--window: expected comma-separated numbers, got {text!r}") from None
    if len(vals) != 2 * d:
        raise ConfigurationError(f"--window: expected {2 * d} numbers (lower then upper corner) for d={d}")
    return ObservationWindow(tuple(vals[:d]), tuple(vals[d:]))


def _pattern_dimension(path: str) -> int:
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), [])
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror or exc}") from None
    cols = [c.strip().lower() for c in header]
    return sum(c in ("x", "y", "z") for c in cols) or 2


def _intensity_model(text: str | None, has_column: bool):
    if text is None:
        return PerPoint() if has_column else EstimatedConstant()
    if text == "per-point":
        return PerPoint()
    if text == "estimated":
        return EstimatedConstant()
    if text.startswith("constant:"):
        try:
            return Constant(float(text.split(":", 1)[1]))
        except ValueError:
            raise ConfigurationError(f"--intensity: bad constant in {text!r}") from None
    raise ConfigurationError(f"--intensity: expected per-point, estimated or constant:<value>, got {text!r}")


def _parse_bandwidth(text: str | None, estimator: str):
    text = text or ("cv" if estimator == "kernel-c" else "stoyan")
    if text == "stoyan":
        return StoyanDefault()
    if text == "illian":
        return Illian()
    if text == "cv":
        return "cv"
    if text.startswith("fixed:"):
        try:
            b = float(text.split(":", 1)[1])
        except ValueError:
            b = math.nan
        if not b > 0:
            raise ConfigurationError(f"--bandwidth: fixed bandwidth must be positive, got {text!r}")
        return b
    raise ConfigurationError(f"--bandwidth: expected fixed:<b>, stoyan, illian or cv, got {text!r}")


def cmd_estimate(args) -> int:
    d = _pattern_dimension(args.pattern)
    window = _window_from_arg(args.window, d)
    pattern = read_pattern_csv(args.pattern, window)
    model = _intensity_model(args.intensity, pattern.intensities is not None)
    rho = resolve_intensity(pattern, model)
    if args.grid < 2:
        raise ConfigurationError("--grid must be at least 2")
    if not args.R > 0 or not args.rmin >= 0:
        raise ConfigurationError("--R must be positive and --rmin non-negative")
    r = np.linspace(args.rmin, args.rmin + args.R, args.grid + 2)[1:-1]
    info: dict = {"estimator": args.estimator}

    if args.estimator == "ortho":
        basis = BasisSpec(args.basis, args.R, args.rmin, pattern.d)
        coeffs = estimate_coefficients(pattern, None, basis, args.kmax + 1, rho=rho)
        curve = estimate_curve(pattern, None, basis, args.scheme, r, K_max=args.kmax, coeffs=coeffs,
                               tuning=args.tuning)
        values = curve.values
        info.update(curve.params)
        log.info("selected cut-off K = %d", curve.params["K"])
        print(f"K_hat = {curve.params['K']}")
    else:
        kind = args.estimator.split("-")[1]
        rule = _parse_bandwidth(args.bandwidth, args.estimator)
        if rule == "cv":
            res = cv_bandwidth(pattern, None, kind, args.R, default_cv_grid(), args.kernel,
                               args.rmin, rho=rho, max_workers=_threads(args))
            b = res.bandwidth
            log.info("cross-validated bandwidth b = %.6g", b)
            print(f"selected bandwidth b = {format_float(b)}")
        elif isinstance(rule, float):
            b = rule
        else:
            b = rule_bandwidth(rule, pattern)
        values = estimate_g(pattern, None, KernelSpec(args.kernel, b), r, kind, args.rmin, rho=rho)
        info["bandwidth"] = b
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        log.error("estimate contains non-finite values")
        return 1
    if args.clamp_nonneg:
        values = np.maximum(values, 0.0)

    out = Path(args.out)
    _prepare_dir(str(out.parent if str(out.parent) else "."))
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "ghat"])
        w.writerows([format_float(a), format_float(b)] for a, b in zip(r, values))
    digest = hashlib.sha256(Path(args.pattern).read_bytes()).hexdigest()
    doc = {
        "tool": "pcfortho",
        "version": __version__,
        "backend": BACKEND,
        "command": "estimate",
        "pattern": str(Path(args.pattern).resolve()),
        "pattern_sha256": digest,
        "window": window.to_dict(),
        "intensity": type(model).__name__,
        "args": {k: v for k, v in vars(args).items() if k not in ("func",)},
        "result": info,
    }
    write_manifest(out.parent / "manifest.json", doc)
    return 0


# bench -------------------------------------------------------------------------

def summary_table(result) -> str:
    lines = [f"{'R':>7} {'estimator':<22} {'MISE small':>12} {'e small':>8} {'MISE all':>12} {'e all':>8} {'excl':>5}"]
    cfg = result.config
    for R in cfg.R:
        for name in cfg.estimators:
            ms, es = result.mise_of(name, "small", R)
            ma, ea = result.mise_of(name, "all", R)
            ex = result.exclusions[(R, name)]
            lines.append(f"{R:7.4g} {name:<22} {ms:12.5g} {es:8.3f} {ma:12.5g} {ea:8.3f} {ex:5d}")
    return "\n".join(lines)


def cmd_bench(args) -> int:
    config = load_config(args.config, n_sim=args.n_sim, seed=args.seed)
    threads = _threads(args)
    if args.dry_run:
        print(f"config OK: {config.n_sim} replicates, estimators {', '.join(config.estimators)}")
        return 0
    out = _prepare_dir(args.out)
    result = run_study(config, threads=threads)
    result.write(out, svg=args.svg)
    write_manifest(out / "manifest.json", manifest(config, "bench"))
    print(summary_table(result))
    if BASELINE not in config.estimators:
        log.warning("baseline %s not in roster; e_I reported as nan", BASELINE)
    failed = [name for (R, name), n in result.exclusions.items() if n == config.n_sim]
    if failed:
        log.error("all replicates excluded for: %s", ", ".join(sorted(set(failed))))
        return 1
    return 0


# entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcfortho", description="Pair correlation function estimation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate point patterns from a JSON config")
    s.add_argument("--config", required=True, help="JSON config (model, window, n_sim, seed)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--n-sim", type=int, help="override n_sim")
    s.add_argument("--seed", type=int, help="override seed")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate g from one pattern CSV")
    e.add_argument("pattern", help="CSV with header x,y[,z][,intensity]")
    e.add_argument("--out", required=True, help="output CSV with columns r,ghat")
    e.add_argument("--window", help="lower and upper corner, e.g. 0,0,1000,500 (default unit box)")
    e.add_argument("--estimator", choices=["kernel-k", "kernel-d", "kernel-c", "ortho"], default="ortho")
    e.add_argument("--basis", choices=[COSINE, BESSEL], default=BESSEL)
    e.add_argument("--scheme", choices=[SIMPLE, REFINED, WAHBA], default=SIMPLE)
    e.add_argument("--tuning", choices=list(TUNINGS), default=CENTRED,
                   help="fit the Fourier-Bessel cut-off to the coefficients of g-1 (centred) or of g (raw)")
    e.add_argument("--kernel", choices=[EPANECHNIKOV, UNIFORM], default=EPANECHNIKOV)
    e.add_argument("--R", type=float, default=0.125, help="lag range length")
    e.add_argument("--rmin", type=float, default=1e-3, help="smallest lag used")
    e.add_argument("--bandwidth", help="fixed:<b>, stoyan, illian or cv")
    e.add_argument("--kmax", type=int, default=K_MAX_DEFAULT, help="largest admissible cut-off")
    e.add_argument("--grid", type=int, default=512, help="number of evaluation lags")
    e.add_argument("--intensity", help="per-point, estimated or constant:<value>")
    e.add_argument("--clamp-nonneg", action="store_true", help="replace negative estimates by 0")
    e.add_argument("--threads", type=int, help="worker cap (default $PCF_THREADS or 1)")
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bench", help="run a Monte Carlo study", epilog=BENCH_OUTPUTS,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    b.add_argument("--config", required=True, help="study JSON config or a manifest.json from a previous run")
    b.add_argument("--out", default="bench_out", help="output directory")
    b.add_argument("--threads", type=int, help="worker processes (default $PCF_THREADS or 1)")
    b.add_argument("--n-sim", type=int, help="override n_sim")
    b.add_argument("--seed", type=int, help="override seed")
    b.add_argument("--svg", action="store_true", help="also write envelope plots (needs matplotlib)")
    b.add_argument("--dry-run", action="store_true", help="validate the config and exit")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PcfError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
