import json
from pathlib import Path

import numpy as np
import pytest

from semisup import cli
from semisup import data_io as io
from semisup import harness as hs
from semisup.errors import InvalidParameterError, MissingInputError, NumericalFailure

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
QUICK_KERNEL = {"kind": "kernel", "n_burn": 30, "n_keep": 60}
TWO_CLUSTER = {"kind": "two-cluster", "n": 40, "noise": 0.05, "seed": 3}


def quick_sweep(**over) -> hs.ExperimentConfig:
    base = {"replicates": 3, "labeled_fractions": [0.2, 0.6], "model": QUICK_KERNEL, "data": TWO_CLUSTER}
    base.update(over)
    return hs.ExperimentConfig.resolve("sweep", base)


# --------------------------------------------------------------------------
# Config


@pytest.mark.parametrize("over", [
    {"replicates": 0},
    {"labeled_fractions": [0.0]},
    {"labeled_fractions": [1.5]},
    {"labeled_fractions": []},
    {"labeled_counts": [0]},
    {"seed": -1},
    {"bogus": 1},
])
def test_config_validation(over):
    with pytest.raises(InvalidParameterError):
        hs.ExperimentConfig.resolve("sweep", over)


def test_unknown_scenario_rejected():
    with pytest.raises(InvalidParameterError):
        hs.ExperimentConfig.resolve("nope")


def test_resolve_merges_nested_overrides():
    cfg = hs.ExperimentConfig.resolve("kernel-synthetic", {"model": {"n_burn": 7}})
    assert cfg.model["n_burn"] == 7 and cfg.model["bandwidth"] == 0.35


def test_load_config_errors(tmp_path):
    with pytest.raises(MissingInputError):
        hs.load_config(tmp_path / "absent.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(InvalidParameterError):
        hs.load_config(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[1]")
    with pytest.raises(InvalidParameterError):
        hs.load_config(tmp_path / "list.json")


def test_stratified_split_partitions():
    labels = np.array([0] * 10 + [1] * 6)
    lab, unl = hs.stratified_split(labels, 0.5, np.random.default_rng(0))
    assert sorted(np.concatenate([lab, unl]).tolist()) == list(range(16))
    assert (labels[lab] == 0).sum() == 5 and (labels[lab] == 1).sum() == 3
    lab, unl = hs.stratified_split(labels, 0.01, np.random.default_rng(0))
    assert (labels[lab] == 0).sum() == 1 and (labels[lab] == 1).sum() == 1


def test_error_rate_ties_are_errors():
    assert hs.error_rate([0.5, 0.5, 0.9, 0.1], [1, 0, 1, 0]) == 0.5


# --------------------------------------------------------------------------
# Sweep


def test_full_fraction_single_replicate_arms_equal():
    summary, reps = hs.run_sweep(quick_sweep(replicates=1, labeled_fractions=[1.0]))
    assert len(reps) == 1 and reps[0]["n_unlabeled"] == 0
    assert reps[0]["labeled_only_error"] == reps[0]["semisupervised_error"]
    assert summary[0]["labeled_only_mean_error"] == summary[0]["semisupervised_mean_error"]


def test_default_sweep_table_shape():
    cfg = hs.ExperimentConfig.resolve("sweep", {"model": {"n_burn": 2, "n_keep": 4}})
    summary, reps = hs.run_sweep(cfg)
    assert len(summary) == 9 and len(reps) == 9 * 50
    assert [s["unlabeled_percent"] for s in summary] == [90, 80, 70, 60, 50, 40, 30, 20, 10]
    assert all(s["replicates"] == 50 for s in summary)


def test_labeled_only_arm_never_touches_unlabeled_rows(monkeypatch):
    data = io.generate_two_cluster_2d(40, 0.05, np.random.default_rng(9))
    calls = []
    original = hs._fit_and_score

    def counting(model_cfg, arm, rng):
        calls.append(arm)
        return original(model_cfg, arm, rng)

    monkeypatch.setattr(hs, "_fit_and_score", counting)
    logged = []
    hs.run_sweep(quick_sweep(), data, row_log=lambda *a: logged.append(a))
    assert len(calls) == 2 * 2 * 3

    def ids(rows):
        return {tuple(r) for r in rows}

    touched = 0
    for lab_arm, semi_arm in zip(calls[::2], calls[1::2]):
        pool = ids(semi_arm.unlabeled_x)
        assert pool and not pool & ids(semi_arm.labeled_x)
        assert lab_arm.unlabeled_x is None
        touched += len(ids(lab_arm.labeled_x) & pool)
        assert ids(lab_arm.labeled_x) == ids(semi_arm.labeled_x)
    assert touched == 0

    for (arm_a, fa, ra, rows_a), (arm_b, fb, rb, rows_b) in zip(logged[::2], logged[1::2]):
        assert (arm_a, arm_b) == ("labeled_only", "semisupervised") and (fa, ra) == (fb, rb)
        assert set(rows_a) < set(rows_b)


def test_failed_fits_are_counted_not_dropped(monkeypatch):
    original = hs._fit_and_score

    def flaky(model_cfg, arm, rng):
        if arm.unlabeled_x is not None and len(arm.labeled_x) < 10:
            raise NumericalFailure("injected")
        return original(model_cfg, arm, rng)

    monkeypatch.setattr(hs, "_fit_and_score", flaky)
    summary, reps = hs.run_sweep(quick_sweep())
    low, high = summary
    assert low["semisupervised_failures"] == 3 and np.isnan(low["semisupervised_mean_error"])
    assert low["labeled_only_failures"] == 0 and high["semisupervised_failures"] == 0
    assert len(reps) == 6
    assert all(r["semisupervised_status"] == "failed: NumericalFailure" for r in reps if r["fraction"] == 0.2)


def test_sweep_factor_model_runs():
    cfg = quick_sweep(replicates=1, labeled_fractions=[0.5],
                      model={"kind": "factor-probit", "k": 2, "n_burn": 20, "n_keep": 40},
                      data={"kind": "expression", "n": 30, "p": 20, "k": 2, "seed": 1})
    summary, _ = hs.run_sweep(cfg)
    assert 0.0 <= summary[0]["semisupervised_mean_error"] <= 1.0


def test_unknown_sweep_kinds():
    with pytest.raises(InvalidParameterError):
        hs.run_sweep(quick_sweep(model={"kind": "tree"}))
    with pytest.raises(InvalidParameterError):
        hs.run_sweep(quick_sweep(data={"kind": "images"}))


# --------------------------------------------------------------------------
# Reproducibility


def test_sweep_byte_identical_across_runs(tmp_path):
    cfg = quick_sweep()
    hs.run_scenario(cfg, tmp_path / "a")
    hs.run_scenario(cfg, tmp_path / "b")
    for name in ("sweep_summary.csv", "sweep_replicates.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_tables_reproduce_from_manifest(tmp_path):
    assert cli.main(["sweep", "--config", str(CONFIGS / "sweep_quick.json"), "--out", str(tmp_path / "a")]) == 0
    manifest = tmp_path / "a" / "manifest.json"
    assert cli.main(["sweep", "--config", str(manifest), "--out", str(tmp_path / "b")]) == 0
    files = json.loads(manifest.read_text())["files"]
    assert files == ["sweep_replicates.csv", "sweep_summary.csv"]
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_output(tmp_path):
    hs.run_scenario(quick_sweep(seed=1), tmp_path / "a")
    hs.run_scenario(quick_sweep(seed=2), tmp_path / "b")
    assert (tmp_path / "a" / "sweep_replicates.csv").read_bytes() != (tmp_path / "b" / "sweep_replicates.csv").read_bytes()


# --------------------------------------------------------------------------
# Scenarios


def test_mixture_scenario_emits_three_curves(tmp_path):
    cfg = hs.ExperimentConfig.resolve("mixture-fig1", hs.load_config(CONFIGS / "mixture_quick.json"))
    res = hs.run_scenario(cfg, tmp_path)
    curves = sorted(f for f in res.files if f.startswith("curve_"))
    assert curves == ["curve_full.csv", "curve_labeled_only.csv", "curve_semisupervised.csv"]
    for name in curves:
        rows = io.read_results(tmp_path / name)
        xs = [float(r["x"]) for r in rows]
        assert len(rows) == 81 and xs[0] == -2.0 and xs[-1] == 2.0
    dens = io.read_results(tmp_path / "density.csv")
    assert {r["arm"] for r in dens} == {"full", "labeled_only", "semisupervised"}
    assert (tmp_path / "manifest.json").exists()
    assert res.summary["replicates"] == 1


def test_digits_missing_inputs_name_the_flag(tmp_path):
    cfg = hs.ExperimentConfig.resolve("digits-6v9")
    with pytest.raises(MissingInputError, match="--idx-images"):
        hs.run_scenario(cfg, tmp_path)
    cfg = hs.ExperimentConfig.resolve("digits-6v9", {"data": {"idx_images": "x"}})
    with pytest.raises(MissingInputError, match="--idx-labels"):
        hs.run_scenario(cfg, tmp_path)
    cfg = hs.ExperimentConfig.resolve("digits-6v9", {"data": {"idx_images": str(tmp_path / "gone"), "idx_labels": "y"}})
    with pytest.raises(MissingInputError, match="--idx-images"):
        hs.run_scenario(cfg, tmp_path)


def _tiny_digit_files(tmp_path):
    rng = np.random.default_rng(5)
    n = 60
    labels = np.array([6, 9] * (n // 2) + [3] * 4, dtype=np.uint8)
    imgs = rng.integers(0, 40, size=(labels.size, 4, 4)).astype(np.uint8)
    imgs[labels == 9, :2, :] += 200  # class signal in the top rows
    (tmp_path / "img").write_bytes(io.write_idx(imgs))
    (tmp_path / "lab").write_bytes(io.write_idx(labels))
    return tmp_path / "img", tmp_path / "lab"


def test_digits_two_error_rates_per_replicate(tmp_path):
    img, lab = _tiny_digit_files(tmp_path)
    cfg = hs.ExperimentConfig.resolve("digits-6v9", {
        "replicates": 3, "model": {"n_burn": 20, "n_keep": 40},
        "data": {"idx_images": str(img), "idx_labels": str(lab), "train_per_class": 20}})
    res = hs.run_scenario(cfg, tmp_path / "out")
    rows = io.read_results(tmp_path / "out" / "digits_errors.csv")
    assert len(rows) == 3
    for r in rows:
        assert 0.0 <= float(r["labeled_only_error"]) <= 1.0 and 0.0 <= float(r["semisupervised_error"]) <= 1.0
    assert set(res.summary) == {"labeled_only_mean_error", "semisupervised_mean_error"}


def test_synthetic_digits_shapes():
    trx, try_, tex, tey = hs.synthetic_digits(train_per_class=30, p=20, n_test=50)
    assert trx.shape == (60, 20) and tex.shape == (50, 20)
    assert (try_ == 0).sum() == 30 and (try_ == 1).sum() == 30
    assert set(np.unique(tey)) <= {0, 1}


def test_relevance_scenario_independent_spec_is_irrelevant(tmp_path):
    spec = str(CONFIGS / "relevance_independent.json")
    res = hs.run_scenario(hs.ExperimentConfig.resolve("relevance", {"data": {"spec": spec}}), tmp_path)
    assert res.summary["verdict"] == "irrelevant"
    rows = io.read_results(tmp_path / "relevance.csv")
    assert rows[0]["case"] == "input" and len(rows) == 10


def test_kernel_scenario_outputs(tmp_path):
    cfg = hs.ExperimentConfig.resolve("kernel-synthetic", {
        "replicates": 2, "model": {"n_burn": 20, "n_keep": 40, "grid_size": 8}})
    res = hs.run_scenario(cfg, tmp_path)
    assert "kernel_summary.csv" in res.files and "kernel_errors_4.csv" in res.files
    fields = [f for f in res.files if f.startswith("field_")]
    assert fields and all(len(io.read_results(tmp_path / f)) == 64 for f in fields)


def test_binary_scenario_reports_both_cells(tmp_path):
    res = hs.run_scenario(hs.ExperimentConfig.resolve("binary-cell"), tmp_path)
    rows = io.read_results(tmp_path / "binary_cell.csv")
    assert len(rows) == 2 and rows[0]["m0"] == 0
    assert float(rows[1]["p_star"]) == pytest.approx(res.summary["p_star"], abs=0)


# --------------------------------------------------------------------------
# CLI


def test_cli_missing_idx_exit_code(capsys):
    assert cli.main(["scenario", "digits-6v9"]) == 2
    assert "--idx-images" in capsys.readouterr().err


def test_cli_bad_flags_exit_code():
    assert cli.main(["scenario", "nope"]) == 2
    assert cli.main(["sweep", "--replicates", "0"]) == 2


def test_cli_numerical_failure_exit_code(monkeypatch, capsys):
    def boom(args):
        raise NumericalFailure("did not converge", {"iterations": 9})

    monkeypatch.setitem(cli.COMMANDS, "binary-cell", boom)
    assert cli.main(["binary-cell"]) == 3
    err = capsys.readouterr().err
    assert "did not converge" in err and "iterations" in err


def test_cli_config_for_other_scenario_rejected(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"scenario": "relevance"}))
    assert cli.main(["sweep", "--config", str(tmp_path / "c.json")]) == 2


def test_cli_analyze_relevance(capsys, tmp_path):
    assert cli.main(["analyze-relevance", "--spec", str(CONFIGS / "relevance_dependent.json"),
                     "--out", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["verdict"] == "relevant" and doc["witness"][0] == "Xm"
    assert (tmp_path / "relevance.csv").exists() and (tmp_path / "manifest.json").exists()
    assert cli.main(["analyze-relevance"]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "irrelevant"


def test_cli_binary_cell(capsys):
    assert cli.main(["binary-cell"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["method"] == "exact" and 0.0 < rec["p_star"] < 1.0


def test_cli_simulate_then_fit(tmp_path, capsys):
    data = tmp_path / "sim"
    assert cli.main(["simulate", "--generator", "two-cluster", "--out", str(data), "--seed", "4"]) == 0
    sim = json.loads(capsys.readouterr().out)
    csv = data / [f for f in sim["files"] if f.endswith(".csv")][0]
    cfg = tmp_path / "k.json"
    cfg.write_text(json.dumps({"model": {"n_burn": 20, "n_keep": 40, "grid_size": 6}}))
    assert cli.main(["fit-kernel", "--data", str(csv), "--config", str(cfg), "--out", str(tmp_path / "k")]) == 0
    assert cli.main(["fit-kernel", "--mode", "laprls", "--data", str(csv), "--out", str(tmp_path / "l")]) == 0
    assert (tmp_path / "k" / "manifest.json").exists() and (tmp_path / "l" / "manifest.json").exists()
    assert cli.main(["fit-kernel", "--data", str(tmp_path / "none.csv")]) == 2


def test_cli_scenario_synthetic_digits(tmp_path, capsys):
    cfg = tmp_path / "d.json"
    cfg.write_text(json.dumps({"model": {"n_burn": 20, "n_keep": 40},
                               "data": {"train_per_class": 20,
                                        "synthetic_data": {"p": 30, "n_test": 40}}}))
    assert cli.main(["scenario", "digits-6v9", "--synthetic-digits", "--replicates", "2",
                     "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert len(io.read_results(tmp_path / "o" / "digits_errors.csv")) == 2
