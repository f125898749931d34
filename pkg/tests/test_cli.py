import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from pcfortho.cli import main
from pcfortho.core import ObservationWindow, write_pattern_csv
from pcfortho.simulate import Thomas, sample_replicate

UNIT = ObservationWindow((0.0, 0.0), (1.0, 1.0))


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def poisson_config(tmp_path, n_sim=3, **kw):
    doc = {"model": {"name": "poisson", "rho": 100}, "window": {"lower": [0, 0], "upper": [1, 1]},
           "n_sim": n_sim, "seed": 4, **kw}
    return write_json(tmp_path / "config.json", doc)


def bench_config(tmp_path, **kw):
    doc = {"model": {"name": "thomas", "kappa": 25, "mu": 4, "sigma": 0.03},
           "window": {"lower": [0, 0], "upper": [1, 1]}, "n_sim": 4, "seed": 2, "R": 0.06,
           "estimators": ["kernel-k", "ortho-bessel-simple", "ortho-cosine-wahba"], **kw}
    return write_json(tmp_path / "bench.json", doc)


def read_curve(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "ghat"]
    return np.array(rows[1:], dtype=float)


@pytest.fixture
def pattern_file(tmp_path):
    path = tmp_path / "pattern.csv"
    write_pattern_csv(path, sample_replicate(Thomas(25, 4, 0.03), UNIT, 6, 0))
    return str(path)


@pytest.fixture
def pattern_with_intensity(tmp_path):
    pat = sample_replicate(Thomas(25, 4, 0.03), UNIT, 6, 1)
    path = tmp_path / "bci.csv"
    with path.open("w") as fh:
        fh.write("x,y,intensity\n")
        for x, y in pat.points:
            fh.write(f"{float(x)!r},{float(y)!r},{100.0 + 20.0 * float(x)!r}\n")
    return str(path)


# simulate --------------------------------------------------------------------

def test_simulate_writes_patterns_and_sidecar(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", poisson_config(tmp_path), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.glob("pattern_*.csv")) == [f"pattern_{i:04d}.csv" for i in range(3)]
    side = json.loads((out / "patterns.json").read_text())
    assert side["seed"] == 4 and side["config"]["model"]["name"] == "poisson"
    assert len(side["files"]) == 3
    assert (out / "manifest.json").exists()


def test_simulate_is_deterministic(tmp_path):
    cfg = poisson_config(tmp_path)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    for name in ("pattern_0000.csv", "pattern_0002.csv", "patterns.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_bad_model_names_field(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"model": {"name": "strauss"}, "window": {"lower": [0, 0], "upper": [1, 1]},
                                           "n_sim": 2})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "model.name" in capsys.readouterr().err


def test_simulate_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--config", poisson_config(tmp_path), "--out", str(blocker / "sub")]) == 2
    assert "cannot write" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = poisson_config(tmp_path, n_simm=3)
    assert main(["bench", "--config", cfg, "--dry-run"]) == 2
    assert "n_simm" in capsys.readouterr().err


# estimate --------------------------------------------------------------------

def test_estimate_ortho_refined_with_intensity_column(tmp_path, pattern_with_intensity, capsys):
    out = tmp_path / "est" / "curve.csv"
    code = main(["estimate", pattern_with_intensity, "--out", str(out), "--estimator", "ortho",
                 "--basis", "bessel", "--scheme", "refined", "--grid", "50"])
    assert code == 0
    assert "K_hat = " in capsys.readouterr().out
    curve = read_curve(out)
    assert curve.shape == (50, 2) and np.all(np.isfinite(curve))
    doc = json.loads((out.parent / "manifest.json").read_text())
    assert doc["intensity"] == "PerPoint" and doc["result"]["K"] >= 2


def test_estimate_kernel_cv_prints_bandwidth(tmp_path, pattern_file, capsys):
    out = tmp_path / "cv.csv"
    assert main(["estimate", pattern_file, "--out", str(out), "--estimator", "kernel-c",
                 "--bandwidth", "cv", "--grid", "20"]) == 0
    line = [s for s in capsys.readouterr().out.splitlines() if s.startswith("selected bandwidth b = ")]
    assert line
    b = float(line[0].split("=")[1])
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["result"]["bandwidth"] == b


def test_estimate_fixed_bandwidth_matches_library(tmp_path, pattern_file):
    from pcfortho.core import EstimatedConstant, read_pattern_csv
    from pcfortho.kernel_est import EPANECHNIKOV, KernelSpec, estimate_gk

    out = tmp_path / "k.csv"
    assert main(["estimate", pattern_file, "--out", str(out), "--estimator", "kernel-k",
                 "--bandwidth", "fixed:0.01", "--grid", "30", "--R", "0.1"]) == 0
    curve = read_curve(out)
    expect = estimate_gk(read_pattern_csv(pattern_file, UNIT), EstimatedConstant(),
                         KernelSpec(EPANECHNIKOV, 0.01), curve[:, 0])
    np.testing.assert_array_equal(curve[:, 1], expect)


def test_estimate_clamp_nonneg(tmp_path, pattern_file):
    out = tmp_path / "c.csv"
    assert main(["estimate", pattern_file, "--out", str(out), "--scheme", "simple", "--kmax", "49",
                 "--clamp-nonneg", "--grid", "40"]) == 0
    assert np.all(read_curve(out)[:, 1] >= 0)


def test_estimate_cosine_needs_positive_rmin(tmp_path, pattern_file, capsys):
    code = main(["estimate", pattern_file, "--out", str(tmp_path / "x.csv"), "--basis", "cosine", "--rmin", "0"])
    assert code == 2
    assert "r_min" in capsys.readouterr().err


def test_estimate_per_point_without_column(tmp_path, pattern_file, capsys):
    code = main(["estimate", pattern_file, "--out", str(tmp_path / "x.csv"), "--intensity", "per-point"])
    assert code == 2
    assert "intensity" in capsys.readouterr().err


@pytest.mark.parametrize("flag", [["--bandwidth", "fixed:-1", "--estimator", "kernel-k"],
                                  ["--intensity", "constant:abc"],
                                  ["--window", "0,0,1"]])
def test_estimate_bad_flags(tmp_path, pattern_file, flag):
    assert main(["estimate", pattern_file, "--out", str(tmp_path / "x.csv"), *flag]) == 2


# bench -----------------------------------------------------------------------

def test_bench_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["bench", "--config", bench_config(tmp_path), "--out", str(out), "--dry-run"]) == 0
    assert "config OK" in capsys.readouterr().out
    assert not out.exists()


def test_bench_outputs_and_manifest_rerun(tmp_path, capsys):
    first = tmp_path / "first"
    assert main(["bench", "--config", bench_config(tmp_path), "--out", str(first), "--threads", "2"]) == 0
    table = capsys.readouterr().out
    assert "ortho-bessel-simple" in table and "MISE small" in table
    second = tmp_path / "second"
    assert main(["bench", "--config", str(first / "manifest.json"), "--out", str(second), "--threads", "1"]) == 0
    for name in ("mise.csv", "moments.csv", "curves_mean.csv", "khat.csv", "exclusions.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_bench_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PCF_THREADS", "zero")
    assert main(["bench", "--config", bench_config(tmp_path), "--out", str(tmp_path / "o")]) == 2


def test_bench_corrupt_pattern_file_is_named(tmp_path, capsys):
    pats = tmp_path / "dpp"
    pats.mkdir()
    for i in range(3):
        write_pattern_csv(pats / f"p{i}.csv", sample_replicate(Thomas(25, 4, 0.03), UNIT, 1, i))
    (pats / "p1.csv").write_text("x,y\n0.1,banana\n")
    cfg = write_json(tmp_path / "dpp.json", {
        "model": {"name": "dpp_gauss", "rho": 100, "alpha": 0.056},
        "window": {"lower": [0, 0], "upper": [1, 1]}, "n_sim": 3, "R": 0.06,
        "estimators": ["kernel-k"], "pattern_dir": "dpp"})
    assert main(["bench", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "p1.csv" in capsys.readouterr().err


def test_bench_all_excluded_exits_one(tmp_path, monkeypatch):
    from pcfortho import bench
    from pcfortho.errors import DomainError

    def broken(*args, **kw):
        raise DomainError("injected failure")

    monkeypatch.setattr(bench, "series_values", broken)
    assert main(["bench", "--config", bench_config(tmp_path), "--out", str(tmp_path / "o")]) == 1


def test_bench_help_documents_columns():
    proc = subprocess.run([sys.executable, "-m", "pcfortho.cli", "bench", "--help"],
                          capture_output=True, text=True, check=True)
    for col in ("mise.csv", "e_I", "n_used", "kurt", "curves_mean.csv", "khat.csv"):
        assert col in proc.stdout
