import json
import os
import stat

import pytest

from data import list_presets, preset_path
from lib.analysis import MetricsRow, RunRecord, compute_constants, theorem2_neighborhood
from lib.harness import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_IO,
    EXIT_OK,
    ConfigError,
    apply_overrides,
    csv_name,
    load_config,
    main,
    parse_config,
    plateau_ratios,
    run_experiment,
    serialize_config,
    summarize,
    write_atomic,
)
from lib.methods import ConsensusSchedule, MethodSpec
from lib.objectives import StochasticOracle


def _config(**overrides):
    payload = {
        "graph": {"kind": "ring", "n": 4},
        "problem": {"kind": "quadratic", "p": 2, "mu": 1.0, "lip": 3.0, "seed": 1},
        "oracle": {"mode": "additive_gaussian", "sigma": 0.5},
        "methods": [
            {"name": "near_dgd", "schedule": {"kind": "constant", "t": 2}},
            {"name": "dsgt"},
            {"name": "centralized_minibatch"},
        ],
        "alpha": 0.1,
        "iterations": 40,
        "seeds": [0, 1],
        "window": 10,
    }
    payload.update(overrides)
    return payload


def _row(err, k=0):
    return MetricsRow(k=k, t_k=1, comm_total=k, evals_total=k, mean_err=err, cons_dev=0.0,
                      y_cons_dev=0.0, fgap=0.0, mean_norm=1.0)


# =========================
# parse_config
# =========================

def test_minimal_config_gets_defaults():
    cfg = parse_config(json.dumps({
        "graph": {"kind": "path", "n": 3},
        "problem": {"kind": "quadratic", "p": 2},
        "methods": [{"name": "near_dgd"}],
        "alpha": 0.1,
        "iterations": 5,
        "seeds": [0],
    }))
    assert cfg.window == 2000
    assert cfg.y0 is None and cfg.psi is None
    assert cfg.oracle.mode == "exact"
    assert cfg.method_specs()[0].display_label == "near_dgd_1"


def test_negative_alpha_names_key():
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(_config(alpha=-1.0)))
    assert info.value.path == "alpha"


@pytest.mark.parametrize("payload,path", [
    (_config(methods=[]), "methods"),
    (_config(seeds=[]), "seeds"),
    (_config(iterations=0), "iterations"),
    (_config(extra_key=1), "extra_key"),
    (_config(methods=[{"name": "near_dgd", "schedule": {"kind": "doubling", "a": 1, "b": 0}}]), "methods.0.schedule.b"),
    (_config(problem={"kind": "quadratic", "p": 2, "mu": -1.0}), "problem.mu"),
    (_config(graph={"kind": "ring"}), "graph.n"),
    (_config(problem={"kind": "quadratic", "p": 1, "mu": 1.0, "lip": 2.0}), "problem"),
])
def test_invalid_configs_carry_paths(payload, path):
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(payload))
    assert info.value.path == path


def test_invalid_json_and_cross_field_errors():
    with pytest.raises(ConfigError):
        parse_config("{not json")
    with pytest.raises(ConfigError):
        parse_config(json.dumps(_config(methods=[{"name": "dgd"}, {"name": "dgd"}])))
    with pytest.raises(ConfigError):
        parse_config(json.dumps(_config(methods=[{"name": "dgd", "schedule": {"kind": "constant", "t": 2}}])))
    with pytest.raises(ConfigError):
        parse_config(json.dumps(_config(oracle={"mode": "minibatch"})))
    with pytest.raises(ConfigError):
        parse_config(json.dumps(_config(graph={"kind": "erdos_renyi", "n": 4})))


def test_dataset_key_is_accepted():
    payload = _config()
    payload["dataset"] = payload.pop("problem")
    cfg = parse_config(json.dumps(payload))
    assert cfg.problem.kind == "quadratic"
    assert cfg == parse_config(json.dumps(_config()))
    assert parse_config(serialize_config(cfg)) == cfg


def test_dataset_errors_and_agent_count_restatement():
    payload = _config()
    del payload["problem"]
    payload["dataset"] = {"kind": "quadratic", "p": 2, "mu": -1.0}
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(payload))
    assert info.value.path in ("dataset.mu", "problem.mu")
    assert parse_config(json.dumps(_config(problem={"kind": "quadratic", "p": 2, "n": 4}))).problem.n == 4
    with pytest.raises(ConfigError):
        parse_config(json.dumps(_config(problem={"kind": "quadratic", "p": 2, "n": 5})))


def test_config_round_trip():
    cfg = parse_config(json.dumps(_config(y0=[0.5, -0.5], psi=0.01, agent_counts=[2, 4])))
    assert parse_config(serialize_config(cfg)) == cfg


def test_fig1_preset():
    cfg = load_config("paper_fig1")
    assert cfg.graph.n == 10 and cfg.graph.p_edge == 0.5
    assert cfg.oracle.batch == 16
    assert cfg.alpha == 1.0
    labels = [spec.display_label for spec in cfg.method_specs()]
    assert labels == [
        "near_dgd_1", "near_dgd_3", "near_dgd_1_500_x2", "dgd", "extra", "dsgt", "centralized_minibatch",
    ]


def test_every_preset_validates():
    names = list_presets()
    assert {"paper_fig1", "path_stress", "variance_reduction", "network_decay", "quick"} <= set(names)
    for name in names:
        load_config(preset_path(name))


def test_overrides():
    cfg = apply_overrides(parse_config(json.dumps(_config())), seeds="4,5,6", iterations=7)
    assert cfg.seeds == [4, 5, 6]
    assert cfg.iterations == 7
    with pytest.raises(ConfigError):
        apply_overrides(cfg, seeds="a,b")


# =========================
# summarize
# =========================

def test_summarize_constant_record():
    record = RunRecord(label="dgd", seed=0, n=2, rows=[_row(0.25, k) for k in range(10)])
    report = summarize([record], specs={"dgd": MethodSpec("dgd")}, window=5)
    assert report.runs[0].plateau == pytest.approx(0.25)
    assert report.runs[0].final_deviation == 0.0
    assert report.methods[0].plateau_mean == pytest.approx(0.25)


def test_summarize_rejects_mismatched_lengths():
    a = RunRecord(label="dgd", seed=0, n=2, rows=[_row(1.0)] * 5)
    b = RunRecord(label="dgd", seed=1, n=2, rows=[_row(1.0)] * 6)
    with pytest.raises(ValueError):
        summarize([a, b])
    with pytest.raises(ValueError):
        summarize([])


def test_summarize_skips_diverged_runs():
    ok = RunRecord(label="dgd", seed=0, n=2, rows=[_row(1.0)] * 5)
    bad = RunRecord(label="dgd", seed=1, n=2, rows=[_row(1.0)] * 2, error="dgd diverged at iteration 1")
    report = summarize([ok, bad])
    assert report.methods[0].diverged_runs == 1
    assert report.runs[1].diverged and report.runs[1].plateau is None
    assert not report.all_diverged


def test_summarize_reports_neighborhood_bracket(quad_suite5, ring5):
    oracle = StochasticOracle(quad_suite5, mode="additive_gaussian", sigma=1.0)
    constants = compute_constants(quad_suite5, ring5, oracle, 0.05)
    bound = theorem2_neighborhood(constants)
    spec = MethodSpec("near_dgd", ConsensusSchedule.increasing())
    inside = RunRecord(label="near_dgd_plus", seed=0, n=5, rows=[_row(0.5 * bound, k) for k in range(10)])
    summary = summarize([inside], specs={"near_dgd_plus": spec}, constants=constants, window=5).methods[0]
    assert summary.bound_kind == "theorem2_neighborhood"
    assert summary.plateau_bound_ratio == pytest.approx(0.5)
    assert summary.plateau_within_bound and summary.plateau_in_bracket

    # Far below the neighborhood: still under the bound but not a match
    low = RunRecord(label="near_dgd_plus", seed=0, n=5, rows=[_row(0.1 * bound, k) for k in range(10)])
    summary = summarize([low], specs={"near_dgd_plus": spec}, constants=constants, window=5).methods[0]
    assert summary.plateau_within_bound
    assert summary.plateau_in_bracket is False


def test_bracket_left_unset_for_other_bounds():
    record = RunRecord(label="dgd", seed=0, n=2, rows=[_row(0.25, k) for k in range(10)])
    summary = summarize([record], specs={"dgd": MethodSpec("dgd")}, window=5).methods[0]
    assert summary.plateau_bound_ratio is None and summary.plateau_in_bracket is None


def test_plateau_ratios():
    first = summarize([RunRecord(label="m", seed=0, n=4, rows=[_row(0.4)] * 5)])
    second = summarize([RunRecord(label="m", seed=0, n=16, rows=[_row(0.1)] * 5)])
    ratios = plateau_ratios({4: first, 16: second})
    assert ratios["m"]["ratio"]["16"] == pytest.approx(0.25)
    assert ratios["m"]["ratio"]["4"] == pytest.approx(1.0)


# =========================
# run_experiment
# =========================

def _read_all(directory):
    out = {}
    for root, _, files in os.walk(directory):
        for name in files:
            path = os.path.join(root, name)
            with open(path, "rb") as f:
                out[os.path.relpath(path, directory)] = f.read()
    return out


def test_run_experiment_outputs_and_determinism(tmp_path):
    cfg = parse_config(json.dumps(_config()))
    first = run_experiment(cfg, out_dir=str(tmp_path / "a"), workers=1)
    run_experiment(cfg, out_dir=str(tmp_path / "b"), workers=3)
    files_a = _read_all(tmp_path / "a")
    assert files_a == _read_all(tmp_path / "b")

    expected_csvs = {csv_name(spec.display_label, seed) for spec in cfg.method_specs() for seed in cfg.seeds}
    assert expected_csvs | {"constants.json", "summary.json"} == set(files_a)

    summary = json.loads(files_a["summary.json"])
    assert {run["csv"] for run in summary["runs"]} == expected_csvs
    assert len(summary["methods"]) == 3
    header = files_a[csv_name("dsgt", 0)].decode().splitlines()[0]
    assert header == "k,t_k,comm_total,evals_total,mean_err,cons_dev,y_cons_dev,fgap"
    assert len(files_a[csv_name("dsgt", 0)].decode().splitlines()) == 1 + 41
    assert first.summaries[4].methods[0].bound_kind == "theorem1_limit"


def test_agent_count_sweep(tmp_path):
    cfg = parse_config(json.dumps(_config(agent_counts=[2, 4], iterations=20)))
    result = run_experiment(cfg, out_dir=str(tmp_path))
    assert os.path.exists(tmp_path / "n2" / "summary.json")
    assert os.path.exists(tmp_path / "n4" / "summary.json")
    ratios = json.loads((tmp_path / "plateau_ratios.json").read_text())
    assert set(ratios) == {"near_dgd_2", "dsgt", "centralized_minibatch"}
    assert result.ratios == ratios


def test_divergence_recorded_not_fatal(tmp_path):
    cfg = parse_config(json.dumps(_config(alpha=3.0, iterations=300, methods=[{"name": "dgd"}])))
    result = run_experiment(cfg, out_dir=str(tmp_path))
    summary = result.summaries[4]
    assert all(run.diverged for run in summary.runs)
    assert result.all_diverged
    assert os.path.exists(tmp_path / csv_name("dgd", 0))
    assert summary.constants is None and summary.constants_error


def test_write_atomic_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out" / "file.json"
    write_atomic(str(target), "{}\n")
    assert target.read_text() == "{}\n"
    assert os.listdir(tmp_path / "out") == ["file.json"]


@pytest.mark.skipif(os.name != "posix", reason="POSIX permission bits")
def test_write_atomic_uses_umask_mode(tmp_path):
    previous = os.umask(0o022)
    try:
        target = tmp_path / "summary.json"
        write_atomic(str(target), "{}\n")
    finally:
        os.umask(previous)
    assert stat.S_IMODE(os.stat(target).st_mode) == 0o644


# =========================
# CLI
# =========================

def _write_config(tmp_path, payload):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(payload))
    return str(path)


def test_cli_validate_and_constants(tmp_path, capsys):
    path = _write_config(tmp_path, _config())
    assert main(["validate", path]) == EXIT_OK
    assert main(["constants", path]) == EXIT_OK
    out = capsys.readouterr().out
    payload = json.loads(out[out.index("{"):])
    assert payload["n"] == 4


def test_cli_config_error_writes_nothing(tmp_path):
    path = _write_config(tmp_path, _config(methods=[]))
    out_dir = tmp_path / "results"
    assert main(["run", path, "--out", str(out_dir)]) == EXIT_CONFIG
    assert not out_dir.exists()


def test_cli_run_with_overrides(tmp_path):
    path = _write_config(tmp_path, _config())
    out_dir = tmp_path / "results"
    assert main(["run", path, "--out", str(out_dir), "--seeds", "7", "--iterations", "5"]) == EXIT_OK
    assert (out_dir / csv_name("dsgt", 7)).exists()
    assert not (out_dir / csv_name("dsgt", 0)).exists()


def test_cli_all_diverged(tmp_path):
    path = _write_config(tmp_path, _config(alpha=3.0, iterations=300, methods=[{"name": "dgd"}]))
    assert main(["run", path, "--out", str(tmp_path / "r")]) == EXIT_DIVERGED


def test_cli_missing_dataset_is_io_error(tmp_path):
    payload = _config(problem={"kind": "libsvm", "path": str(tmp_path / "missing.libsvm")}, oracle={"mode": "exact"})
    path = _write_config(tmp_path, payload)
    assert main(["run", path, "--out", str(tmp_path / "r")]) == EXIT_IO


def test_cli_lists_presets(capsys):
    assert main(["presets"]) == EXIT_OK
    assert "paper_fig1" in capsys.readouterr().out.split()


def test_plot_curves_average_seeds(tmp_path):
    from plot_results import load_curves

    cfg = parse_config(json.dumps(_config(iterations=10)))
    run_experiment(cfg, out_dir=str(tmp_path))
    curves = load_curves(str(tmp_path), "comm_total")
    assert set(curves) == {"near_dgd_2", "dsgt", "centralized_minibatch"}
    assert len(curves["dsgt"]["err"]) == 11
    assert curves["near_dgd_2"]["x"][-1] == 20
