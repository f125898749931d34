import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import interp1d

from pcfortho import bench
from pcfortho.bench import (
    BASELINE,
    EstimatorSpec,
    StudyConfig,
    eval_grid,
    log_relative_efficiency,
    moment_summaries,
    run_study,
)
from pcfortho.core import ObservationWindow, write_pattern_csv
from pcfortho.errors import ConfigurationError, DomainError, InsufficientSampleError
from pcfortho.simulate import DppGauss, Thomas, sample_replicate

UNIT = ObservationWindow((0.0, 0.0), (1.0, 1.0))
THOMAS = Thomas(25.0, 4.0, 0.03)


def small_config(**kw):
    base = dict(model=THOMAS, window=UNIT, n_sim=6, R=(0.06,), seed=3,
                estimators=("kernel-k", "kernel-d", "ortho-bessel-simple", "ortho-cosine-refined", "oracle"))
    base.update(kw)
    return StudyConfig(**base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# formulas --------------------------------------------------------------------

def test_log_relative_efficiency_example():
    assert log_relative_efficiency(2.0, 1.0) == pytest.approx(math.log(2.0))
    assert log_relative_efficiency(2.0, 1.0) == pytest.approx(0.693, abs=5e-4)


def test_efficiency_of_perfect_estimator_is_inf():
    assert log_relative_efficiency(1.0, 0.0) == math.inf


def test_moment_summaries_small_example():
    s = moment_summaries([1, 2, 3, 4])
    assert s.mean == 2.5
    assert s.sd == pytest.approx(1.2909944487358056, rel=1e-14)
    assert s.skewness == pytest.approx(0.0, abs=1e-15)
    assert s.kurtosis == pytest.approx(1.64)  # m4 / m2^2 = 2.5625 / 1.5625
    assert not s.zero_variance


def test_moment_summaries_constant():
    s = moment_summaries([3.0] * 10)
    assert (s.mean, s.sd, s.skewness, s.kurtosis, s.zero_variance) == (3.0, 0.0, 0.0, 0.0, True)


def test_moment_summaries_normal_oracle():
    x = np.random.default_rng(0).standard_normal(1_000_000)
    s = moment_summaries(x)
    assert abs(s.skewness) < 0.01
    assert abs(s.kurtosis - 3.0) < 0.03


def test_moment_summaries_need_four_values():
    with pytest.raises(InsufficientSampleError):
        moment_summaries([1.0, 2.0, 3.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=50), st.floats(-100, 100), st.floats(0.1, 10))
def test_moment_summaries_affine_invariance(xs, shift, scale):
    a = moment_summaries(xs)
    if a.zero_variance or a.sd < 1e-6 * max(1.0, max(map(abs, xs))):
        return
    b = moment_summaries(np.asarray(xs) * scale + shift)
    assert b.mean == pytest.approx(a.mean * scale + shift, rel=1e-9, abs=1e-9)
    assert b.sd == pytest.approx(a.sd * scale, rel=1e-9)
    assert b.skewness == pytest.approx(a.skewness, rel=1e-6, abs=1e-6)
    assert b.kurtosis == pytest.approx(a.kurtosis, rel=1e-6)


# configuration ---------------------------------------------------------------

@pytest.mark.parametrize("name", ["kernel-k", "kernel-c:cv", "kernel-d:fixed=0.01", "ortho-cosine-wahba", "oracle"])
def test_estimator_names_parse(name):
    assert EstimatorSpec.parse(name).name == name


@pytest.mark.parametrize("name", ["kernel-x", "kernel-k:silverman", "ortho-legendre-simple", "ortho-bessel-simple:cv"])
def test_bad_estimator_names(name):
    with pytest.raises(ConfigurationError):
        EstimatorSpec.parse(name)


def test_default_kernel_bandwidths():
    assert EstimatorSpec.parse("kernel-k").bandwidth == "stoyan"
    assert EstimatorSpec.parse("kernel-c").bandwidth == "cv"


def test_config_round_trip():
    cfg = small_config()
    again = StudyConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_config_accepts_scalar_R_and_grid_spec():
    doc = small_config().to_dict()
    doc["R"] = 0.085
    doc["cv_grid"] = {"lo": 0.01, "hi": 0.05, "n": 5}
    cfg = StudyConfig.from_dict(doc)
    assert cfg.R == (0.085,)
    assert len(cfg.cv_grid) == 5 and cfg.cv_grid[0] == pytest.approx(0.01)


@pytest.mark.parametrize("change, field", [
    ({"n_sim": 1}, "n_sim"),
    ({"small_lag_upper": 0.5}, "small_lag_upper"),
    ({"intensity": "guess"}, "intensity"),
    ({"upper_limit": "2R"}, "upper_limit"),
    ({"r_min": 0.0}, "r_min"),
])
def test_config_validation_names_field(change, field):
    with pytest.raises(ConfigurationError, match=field):
        small_config(**change)


def test_config_rejects_unknown_key():
    doc = small_config().to_dict()
    doc["bandwith"] = 0.1
    with pytest.raises(ConfigurationError, match="bandwith"):
        StudyConfig.from_dict(doc)


def test_dpp_config_needs_patterns():
    with pytest.raises(ConfigurationError, match="pattern_dir"):
        small_config(model=DppGauss(100.0, 0.056))


def test_eval_grid_is_open_interval():
    cfg = small_config()
    g = eval_grid(cfg, 0.06)
    assert g.size == 512 and g[0] > cfg.r_min and g[-1] < cfg.r_min + 0.06
    np.testing.assert_allclose(np.diff(g), 0.06 / 513, rtol=1e-9)


# study harness ---------------------------------------------------------------

@pytest.fixture(scope="module")
def study():
    return run_study(small_config())


def test_oracle_has_zero_mise(study, tmp_path):
    for interval in ("small", "all"):
        mise, eff = study.mise_of("oracle", interval)
        assert mise == 0.0 and eff == math.inf
    study.write(tmp_path)
    rows = [r for r in read_csv(tmp_path / "mise.csv") if r["estimator"] == "oracle"]
    assert rows and all(r["e_I"] == "inf" and float(r["mise"]) == 0.0 for r in rows)


def test_baseline_efficiency_is_zero(study):
    for interval in ("small", "all"):
        assert study.mise_of(BASELINE, interval)[1] == 0.0


def test_mise_matches_direct_computation(study):
    # recompute one MISE from the stored curves of the same replicates
    cfg = study.config
    grid = eval_grid(cfg, 0.06)
    from pcfortho.simulate import reference_pcf

    truth = reference_pcf(cfg.model, grid)
    curves = np.vstack([bench.run_replicate(cfg, rep)[(0.06, "kernel-d")]["values"][:512] for rep in range(cfg.n_sim)])
    sq = interp1d(grid, (curves - truth) ** 2, axis=1, fill_value="extrapolate")
    closed = np.concatenate([[cfg.r_min], grid, [cfg.r_min + 0.06]])
    ise = np.trapezoid(sq(closed), closed, axis=1)
    assert study.mise_of("kernel-d", "all")[0] == pytest.approx(2 * math.pi * ise.mean(), rel=1e-12)


def test_outputs_written(study, tmp_path):
    paths = study.write(tmp_path, svg=True)
    names = {p.name for p in paths}
    assert {"mise.csv", "moments.csv", "curves_mean.csv", "khat.csv", "exclusions.csv"} <= names
    assert any(n.endswith(".svg") for n in names)
    moments = read_csv(tmp_path / "moments.csv")
    assert {float(r["r"]) for r in moments} == {0.025}  # 0.1 lies outside (r_min, r_min + 0.06)
    khat = read_csv(tmp_path / "khat.csv")
    assert sum(int(r["count"]) for r in khat if r["estimator"] == "ortho-bessel-simple") == 6


def test_replicate_order_independence(study):
    shuffled = run_study(small_config(), replicate_order=[4, 1, 5, 0, 3, 2])
    assert shuffled.mise == study.mise
    assert shuffled.moments == study.moments
    assert shuffled.khat == study.khat


def test_thread_count_independence(study):
    parallel = run_study(small_config(), threads=2)
    assert parallel.mise == study.mise
    assert parallel.khat == study.khat


def test_replicate_order_must_be_permutation():
    with pytest.raises(ConfigurationError):
        run_study(small_config(), replicate_order=[0, 0, 1, 2, 3, 4])


def test_failed_replicates_are_excluded(monkeypatch):
    real = bench.series_values
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] in (2, 5):
            raise DomainError("injected failure")
        return real(*args, **kw)

    monkeypatch.setattr(bench, "series_values", flaky)
    cfg = small_config(estimators=("kernel-k", "ortho-bessel-simple"))
    res = run_study(cfg)
    assert res.exclusions[(0.06, "ortho-bessel-simple")] == 2
    assert res.exclusions[(0.06, "kernel-k")] == 0
    assert [e[0] for e in res.errors] == [1, 4]
    assert res.mise_of("ortho-bessel-simple", "all")[0] > 0
    n_used = [row[5] for row in res.mise if row[1] == "ortho-bessel-simple"]
    assert n_used == [4, 4]


def test_pattern_directory_replicates(tmp_path):
    for rep in range(4):
        write_pattern_csv(tmp_path / f"p{rep:03d}.csv", sample_replicate(THOMAS, UNIT, 9, rep))
    cfg = small_config(n_sim=4, pattern_dir=str(tmp_path), estimators=("kernel-k",))
    res = run_study(cfg)
    ref = run_study(small_config(n_sim=4, seed=9, estimators=("kernel-k",)))
    assert res.mise == ref.mise


def test_pattern_directory_too_small(tmp_path):
    write_pattern_csv(tmp_path / "p.csv", sample_replicate(THOMAS, UNIT, 9, 0))
    with pytest.raises(ConfigurationError, match="pattern_dir"):
        run_study(small_config(n_sim=4, pattern_dir=str(tmp_path)))


def test_mise_stable_under_grid_refinement():
    est = ("kernel-k", "ortho-bessel-simple")
    coarse = run_study(small_config(n_sim=4, estimators=est))
    fine = run_study(small_config(n_sim=4, estimators=est, grid_size=2048))
    for name in est:
        for interval in ("small", "all"):
            a, b = coarse.mise_of(name, interval)[0], fine.mise_of(name, interval)[0]
            assert abs(a - b) <= 0.01 * b


@pytest.mark.slow
def test_median_khat_grows_with_window():
    def median_k(side):
        cfg = StudyConfig(model=THOMAS, window=ObservationWindow((0.0, 0.0), (side, side)), n_sim=60,
                          R=(0.125,), estimators=("ortho-bessel-simple",), seed=5)
        rows = run_study(cfg, threads=2).khat
        ks = np.repeat([k for _, _, k, _ in rows], [c for *_, c in rows])
        return np.median(ks)

    assert median_k(2.0) >= median_k(1.0)


def test_manifest_records_var_gamma_law():
    from pcfortho.simulate import VAR_GAMMA_LAW, VarGammaCluster

    vg = small_config(model=VarGammaCluster(25.0, 4.0, -0.25, 0.01845))
    assert bench.manifest(vg, "bench")["displacement_law"] == VAR_GAMMA_LAW
    assert "displacement_law" not in bench.manifest(small_config(), "bench")
