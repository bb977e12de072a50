import csv
import io
import json

import pytest

from abandonq.harness.cli import main
from abandonq.harness.config import ConfigError, load_config, parse_config, scenario_path
from abandonq.harness.experiment import (CSV_COLUMNS, EXIT_CONFIG, EXIT_GATE, EXIT_PASS,
                                         EXIT_STABILITY, ConvergenceReport, run_experiment)


def small_raw(**kw):
    raw = {
        "schema_version": 1, "scenario": "tiny", "lambda": 1.0, "theta": 0.0,
        "u_spec": {"kind": "exponential"}, "v_spec": {"kind": "gamma", "shape": 2.0},
        "patience": {"variant": "hazard_scaled", "hazard": {"poly": [1.0]},
                     "growth": {"C": 1.0, "m": 1.0}},
        "n_grid": [4, 16], "moment_orders": [1, 2], "p": 4,
        "sim": {"num_arrivals": 60000, "num_batches": 8, "min_burn_in": 1000},
        "seeds_per_n": 2, "base_seed": 99, "cdf_grid": None,
        "gates": {"moment_orders": [1], "moment_rel_err_max": 1.0, "ks_max": 1.0,
                  "pa_rel_err_max": 1.0},
    }
    raw.update(kw)
    return raw


def write_cfg(tmp_path, name="cfg.json", **kw):
    p = tmp_path / name
    p.write_text(json.dumps(small_raw(**kw)))
    return str(p)


def test_run_passes_and_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--config", write_cfg(tmp_path), "--out", str(out)])
    assert code == EXIT_PASS
    rows = list(csv.reader(open(out / "report.csv")))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 2 * 2
    for name in ("report.json", "error_vs_n.svg", "cdf_overlay.svg", "abandonment.svg"):
        assert (out / name).exists()
    assert "grid-KS = " in (out / "cdf_overlay.svg").read_text()
    assert "PASS" in capsys.readouterr().out


def test_gate_failure_exit_code(tmp_path):
    gates = {"moment_orders": [1], "moment_rel_err_max": 1e-6}
    out = tmp_path / "o"
    assert main(["run", "--config", write_cfg(tmp_path, gates=gates), "--out", str(out),
                 "--no-plots"]) == EXIT_GATE
    assert (out / "report.csv").exists()
    rep = ConvergenceReport.load(out / "report.json")
    assert rep.verdicts == {"moment_rel_err[m=1]": False}


def test_config_errors_exit_2(tmp_path):
    for bad in ({"n_grid": []}, {"n_grid": [16, 4]}, {"schema_version": 2},
                {"u_spec": {"kind": "nope"}}, {"waive": ["zzz"]}, {"lambda": -1.0}):
        assert main(["run", "--config", write_cfg(tmp_path, **bad), "--no-plots",
                     "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_validator_failure_and_waiver(tmp_path):
    cfg = write_cfg(tmp_path, u_spec={"kind": "deterministic"})
    assert main(["validate", "--config", cfg]) == EXIT_CONFIG
    assert main(["validate", "--config", cfg, "--waive-a5"]) == EXIT_PASS
    assert main(["run", "--config", cfg, "--no-plots", "--out", str(tmp_path / "r")]) == \
        EXIT_CONFIG
    assert main(["run", "--config", cfg, "--waive-a5", "--no-plots",
                 "--out", str(tmp_path / "r")]) == EXIT_PASS


def test_growth_validator_failure(tmp_path):
    # H(x) = x^3 / 3 exceeds 0.1 (1 + x) near x = 1
    pat = {"variant": "hazard_scaled", "hazard": {"poly": [0.0, 0.0, 1.0]},
           "growth": {"C": 0.1, "m": 1.0}}
    assert main(["validate", "--config", write_cfg(tmp_path, patience=pat)]) == EXIT_CONFIG


def test_stability_failure_exit_3(tmp_path, capsys):
    cfg = write_cfg(tmp_path, theta=0.5, patience={"variant": "none"})
    assert main(["run", "--config", cfg, "--no-plots", "--out", str(tmp_path / "s")]) == \
        EXIT_STABILITY
    assert "stability" in capsys.readouterr().err
    assert not (tmp_path / "s" / "report.csv").exists()
    assert main(["validate", "--config", cfg]) == EXIT_STABILITY
    assert main(["diffusion", "--config", cfg]) == EXIT_STABILITY


def test_csv_byte_identical_across_runs_and_threads(tmp_path):
    cfg = write_cfg(tmp_path)
    texts = []
    for k, threads in enumerate((1, 1, 2)):
        out = tmp_path / f"run{k}"
        assert main(["run", "--config", cfg, "--out", str(out), "--no-plots",
                     "--threads", str(threads)]) == EXIT_PASS
        texts.append((out / "report.csv").read_bytes())
    assert texts[0] == texts[1] == texts[2]


def test_seed_override_by_environment(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    monkeypatch.setenv("ABANDONQ_SEED", "12345")
    loaded = load_config(cfg)
    assert loaded.base_seed == 12345
    rep, _ = run_experiment(loaded)
    monkeypatch.delenv("ABANDONQ_SEED")
    base, _ = run_experiment(load_config(cfg))
    assert rep.metadata["config_hash"] != base.metadata["config_hash"]
    assert rep.rows[0]["sim_moment"] != base.rows[0]["sim_moment"]


def test_report_merge(tmp_path):
    a, _ = run_experiment(parse_config(small_raw(n_grid=[4])))
    b, _ = run_experiment(parse_config(small_raw(n_grid=[16])))
    with pytest.raises(ValueError, match="config hash"):
        a.merge(b)
    # same config, disjoint n: pretend two halves of one run
    whole, _ = run_experiment(parse_config(small_raw()))
    lo = ConvergenceReport.from_dict(whole.to_dict())
    hi = ConvergenceReport.from_dict(whole.to_dict())
    lo.rows = [r for r in lo.rows if r["n"] == 4]
    hi.rows = [r for r in hi.rows if r["n"] == 16]
    assert hi.merge(lo).to_csv() == whole.to_csv()
    with pytest.raises(ValueError):
        whole.merge(whole)


def test_report_json_round_trip(tmp_path):
    rep, _ = run_experiment(parse_config(small_raw()), out_dir=tmp_path)
    again = ConvergenceReport.load(tmp_path / "report.json")
    assert again.to_csv() == rep.to_csv()
    assert again.verdicts == rep.verdicts
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert {r["seeds"] for r in rows} == {"2"}
    assert all(float(r["ci_half"]) > 0 for r in rows)


def test_plot_command(tmp_path):
    out = tmp_path / "p"
    run_experiment(parse_config(small_raw()), out_dir=out)
    assert main(["plot", "--report", str(out / "report.json"), "--out", str(tmp_path / "f")]) \
        == EXIT_PASS
    svg = (tmp_path / "f" / "cdf_overlay.svg").read_text()
    assert "grid-KS = " in svg


def test_diffusion_command(tmp_path, capsys):
    exp = tmp_path / "d.csv"
    assert main(["diffusion", "--config", scenario_path("mm1m"), "--export", str(exp)]) == \
        EXIT_PASS
    text = capsys.readouterr().out
    line = [ln for ln in text.splitlines() if ln.startswith("moment[1]")][0]
    assert float(line.split("\t")[1]) == pytest.approx(0.7978845608, rel=1e-9)
    assert exp.read_text().startswith("x,density,cdf")


def test_shipped_scenarios_parse():
    for name in ("mm1m", "rbm_no_abandonment", "capped_quadratic"):
        cfg = load_config(scenario_path(name))
        assert cfg.n_grid
    with pytest.raises(ConfigError):
        parse_config([1, 2])
