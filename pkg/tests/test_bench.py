import csv
import json
import os

import numpy as np
import pytest

from mixest.bench import (
    CSV_HEADER,
    ExperimentConfig,
    default_checkpoints,
    emit_outputs,
    load_config,
    read_record,
    run_experiment,
    set_path,
    sweep,
    trial_seed,
)
from mixest.cli import main
from mixest.errors import ConfigError, NumericError, OutputError, TrialError


def cat_config(tmp_path, **kw):
    d = {
        "name": "tiny",
        "target": {"kind": "sparse_categorical", "K": 20, "support_size": 20, "decay": "zipf", "seed": 1},
        "dictionary": {"kind": "categorical", "K": 20, "epsilon": 0.05},
        "estimators": [
            {"name": "exp_smd", "mirror": "negative_entropy", "schedule": {"kind": "power_decay", "gamma0": 0.1, "decay": 0.35}},
            {"name": "sgd", "mirror": "euclidean", "output_mode": "last_iterate", "schedule": {"kind": "strongly_convex"}},
        ],
        "baselines": [{"name": "add_constant", "kind": "add_constant", "c": 1.0}],
        "N": 400,
        "trials": 3,
        "metrics": ["kl_vs_target", "kl_vs_best_in_class", "l2_vs_best_in_class"],
        "output_dir": str(tmp_path / "out"),
        "formats": ["csv", "json", "svg"],
    }
    d.update(kw)
    return d


def write_toml(path, d):
    # JSON is accepted too and needs no writer dependency
    path.write_text(json.dumps(d))
    return path


def test_minimal_run_one_row_per_estimator(tmp_path):
    d = cat_config(tmp_path, N=1, trials=1, checkpoints=[1], baselines=[], formats=["csv"],
                   metrics=["kl_vs_target"])
    rec = run_experiment(d)
    rows = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert rows[0] == CSV_HEADER
    assert sorted(r.split(",")[0] for r in rows[1:]) == ["exp_smd", "sgd"]
    assert rec["checkpoints"] == [1]


def test_formats_control_files(tmp_path):
    run_experiment(cat_config(tmp_path, formats=["csv"]))
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["metrics.csv"]
    run_experiment(cat_config(tmp_path, formats=[], output_dir=str(tmp_path / "none")))
    assert not (tmp_path / "none").exists()


def test_record_contents(tmp_path):
    rec = run_experiment(cat_config(tmp_path))
    for key in ("config", "per_trial", "summary", "oracles", "bounds", "rate_fits", "timings", "provenance"):
        assert key in rec
    # mean and stderr recompute from per-trial values
    a = np.asarray(rec["per_trial"]["exp_smd"]["kl_vs_target"])
    np.testing.assert_allclose(rec["summary"]["exp_smd"]["kl_vs_target"]["mean"], a.mean(0))
    np.testing.assert_allclose(rec["summary"]["exp_smd"]["kl_vs_target"]["stderr"], a.std(0, ddof=1) / np.sqrt(3))
    assert len(set(rec["provenance"]["stream_sha256"])) == 3
    assert rec["bounds"]["sgd"]["theorem"] == "theorem1"
    assert "m_star" in rec["oracles"] and "nu" in rec["oracles"] and "g_inf" in rec["oracles"]
    # CSV rows cover (estimator, trial, checkpoint, metric)
    with open(tmp_path / "out" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    n_ck, n_bck = len(rec["checkpoints"]), len(rec["baseline_checkpoints"])
    assert len(rows) == 3 * (2 * 3 * n_ck + n_bck)
    # projected SGD reaches the boundary, where KL(m* || m) is infinite
    assert np.isinf(rec["summary"]["sgd"]["kl_vs_best_in_class"]["mean"][-1])
    back = json.loads((tmp_path / "out" / "record.json").read_text())["summary"]
    for name, metrics in rec["summary"].items():
        for metric, s in metrics.items():
            np.testing.assert_array_equal(back[name][metric]["mean"], s["mean"])


def test_svg_has_curves_and_bounds(tmp_path):
    run_experiment(cat_config(tmp_path))
    svg = (tmp_path / "out" / "curves.svg").read_text()
    for est in ("exp_smd", "sgd"):
        assert f'id="curve-{est}-kl_vs_target"' in svg
    assert 'id="bound-sgd-l2_vs_best_in_class"' in svg
    assert 'id="curve-add_constant-kl_vs_target"' in svg


def test_paired_streams_and_seeds(tmp_path):
    rec = run_experiment(cat_config(tmp_path, formats=[]), emit=False)
    assert rec["provenance"]["trial_seeds"][2] == {"entropy": 0, "spawn_key": [1, 2]}
    assert trial_seed(0, 2).spawn_key == (1, 2)


def test_rerun_and_jobs_are_byte_identical(tmp_path):
    a = cat_config(tmp_path, output_dir=str(tmp_path / "a"), formats=["csv"], trials=5, trial_block=2)
    run_experiment(a)
    run_experiment(dict(a, output_dir=str(tmp_path / "b")), jobs=2)
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_unwritable_output_fails_before_work(tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    import mixest.bench as bench

    def boom(*a, **k):
        raise AssertionError("computation started")

    monkeypatch.setattr(bench, "_Context", boom)
    with pytest.raises(OutputError):
        run_experiment(cat_config(tmp_path, output_dir=str(blocker / "sub")))


def test_bad_spec_is_config_error_naming_it(tmp_path):
    d = cat_config(tmp_path, formats=[])
    d["estimators"][0]["m0"] = [0.5, 0.5]
    with pytest.raises(ConfigError, match="exp_smd"):
        run_experiment(d, emit=False)


def test_runtime_failure_is_trial_error(tmp_path, monkeypatch):
    import mixest.bench as bench

    def fail(*a, **k):
        raise NumericError("non-finite iterate")

    monkeypatch.setattr(bench, "fit_add_constant", fail)
    with pytest.raises(TrialError) as info:
        run_experiment(cat_config(tmp_path, formats=[]), emit=False)
    assert "add_constant" in str(info.value) and info.value.trial == 0
    assert isinstance(info.value.cause, NumericError)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(cat_config(tmp_path, bogus=1))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(cat_config(tmp_path, checkpoints=[10, 5]))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(cat_config(tmp_path, checkpoints=[500]))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(cat_config(tmp_path, metrics=["accuracy"]))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(cat_config(tmp_path, trials=0))
    d = cat_config(tmp_path)
    d["estimators"][0]["schedule"] = {"kind": "cosine"}
    with pytest.raises(ConfigError):
        run_experiment(d, emit=False)


def test_default_checkpoints():
    ck = default_checkpoints(20000, 20)
    assert ck[0] == 1 and ck[-1] == 20000 and np.all(np.diff(ck) > 0) and len(ck) <= 20


def test_load_config_and_seed_override(tmp_path):
    p = write_toml(tmp_path / "c.json", cat_config(tmp_path))
    assert load_config(p, env={}).seed == 0
    assert load_config(p, env={"MIXEST_SEED": "17"}).seed == 17
    with pytest.raises(ConfigError):
        load_config(p, env={"MIXEST_SEED": "x"})
    toml = tmp_path / "c.toml"
    toml.write_text('N = 10\n[target]\nkind = "categorical_pmf"\npmf = [0.5, 0.5]\n'
                    '[dictionary]\nkind = "categorical"\nK = 2\nepsilon = 0.5\n'
                    '[[baselines]]\nkind = "add_constant"\n')
    assert load_config(toml, env={}).N == 10


def test_shipped_configs_parse():
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in ("fourmode.toml", "categorical.toml", "wide_spikes.toml", "theorems.toml"):
        load_config(os.path.join(root, name), env={})


def test_set_path_and_sweep(tmp_path):
    d = cat_config(tmp_path, formats=["csv"], N=50, trials=1)
    set_path(d, "estimators.0.schedule.gamma0", 0.3)
    assert d["estimators"][0]["schedule"]["gamma0"] == 0.3
    with pytest.raises(ConfigError):
        set_path(d, "estimators.9.schedule", 1)
    recs = sweep(d, "estimators.0.schedule.gamma0", ["0.05", "0.2"])
    assert len(recs) == 2
    assert (tmp_path / "out" / "gamma0=0.05" / "metrics.csv").exists()
    assert recs[1]["config"]["estimators"][0]["schedule"]["gamma0"] == 0.2


def test_continuous_run_and_replot(tmp_path):
    d = {
        "name": "small_four",
        "target": {"kind": "four_mode"},
        "dictionary": {"kind": "gaussian_grid", "layers": [[4, 1.5], [8, 0.6]], "quadrature": 100},
        "estimators": [{"name": "exp_smd", "mirror": "negative_entropy",
                        "schedule": {"kind": "power_decay", "gamma0": 0.1, "decay": 0.35}}],
        "baselines": [{"name": "kde", "kind": "kde"}, {"name": "knn", "kind": "knn"}],
        "N": 300, "trials": 2, "checkpoints": [10, 100, 300], "baseline_checkpoints": [100, 300],
        "kl_resolution": 100, "reference_size": 10000,
        "output_dir": str(tmp_path / "out"), "formats": ["json", "svg", "grid"],
    }
    rec = run_experiment(d)
    assert np.all(np.isfinite(rec["summary"]["kde"]["kl_vs_target"]["mean"]))
    assert 'id="density-target"' in (tmp_path / "out" / "density.svg").read_text()
    assert (tmp_path / "out" / "target_density.csv").read_text().startswith("x,y,p\n")
    again = tmp_path / "again"
    assert main(["plot", str(tmp_path / "out" / "record.json"), "--output-dir", str(again)]) == 0
    assert (again / "curves.svg").read_bytes() == (tmp_path / "out" / "curves.svg").read_bytes()
    assert read_record(tmp_path / "out" / "record.json")["name"] == "small_four"


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("MIXEST_SEED", raising=False)
    good = write_toml(tmp_path / "good.json", cat_config(tmp_path, formats=["csv"], N=50, trials=1))
    assert main(["run", str(good)]) == 0
    assert "exp_smd" in capsys.readouterr().out
    bad = write_toml(tmp_path / "bad.json", cat_config(tmp_path, N=-3))
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["run", str(good), "--output-dir", str(blocker / "x")]) == 3
    broken = cat_config(tmp_path, formats=[], N=50, trials=1)
    broken["estimators"][0]["m0"] = [1.0]
    assert main(["run", str(write_toml(tmp_path / "broken.json", broken))]) == 2
    assert "exp_smd" in capsys.readouterr().err
    import mixest.bench as bench

    def fail(*a, **k):
        raise NumericError("boom")

    monkeypatch.setattr(bench, "fit_add_constant", fail)
    assert main(["run", str(good)]) == 3
    assert "add_constant" in capsys.readouterr().err
    monkeypatch.undo()
    assert main(["sweep", str(good), "--param", "N", "--values", "20,30"]) == 0
    assert main(["verify-theorems", str(good)]) == 2


def test_cli_seed_env_changes_output(tmp_path, monkeypatch):
    cfg = write_toml(tmp_path / "c.json", cat_config(tmp_path, formats=["csv"], N=50, trials=1))
    main(["run", str(cfg), "--output-dir", str(tmp_path / "s0")])
    monkeypatch.setenv("MIXEST_SEED", "5")
    main(["run", str(cfg), "--output-dir", str(tmp_path / "s5")])
    assert (tmp_path / "s0" / "metrics.csv").read_bytes() != (tmp_path / "s5" / "metrics.csv").read_bytes()


def test_emit_nothing(tmp_path):
    assert emit_outputs({}, [], tmp_path / "never") == []
    assert not (tmp_path / "never").exists()
