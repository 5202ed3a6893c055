"""CLI behaviour: stdout contracts, exit codes, overrides, dry runs, and
byte-identical reruns."""

import json
import math

import pytest

from pbcert.cli import main


def _write_cfg(tmp_path, **kw):
    cfg = dict(
        dataset={"kind": "synthetic", "generator": "gaussian_pairs", "n": 200,
                 "dim": 6, "separation": 3.0, "seed": 60},
        layer_sizes=[6, 8, 2],
        alpha_grid=[0.0, 0.5],
        seeds=[0],
        epsilon=0.05,
        batch=50,
        learning_rate=0.1,
        momentum=0.9,
        sigma_p_grid=[1e-3, 1e-2],
        t_multipliers=[1, 2],
        mc_samples=100,
        mc_select_samples=40,
        mc_test_samples=32,
        bound_opt_steps=30,
        var_opt_steps=20,
        max_epochs=20,
        prefix_epsilon=0.02,
    )
    cfg.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_invert_kl_prints_value(capsys):
    assert main(["invert-kl", "--q", "0.1", "--b", "0.3680642071684971"]) == 0
    out = capsys.readouterr().out.strip()
    assert float(out) == pytest.approx(0.5, abs=1e-9)


def test_toy_fig1_writes_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "toy"
    assert main(["toy-fig1", "--preset", "calibrated", "--out", str(out)]) == 0
    msg = capsys.readouterr().out
    assert "argmin upper" in msg
    csv_path = out / "toy_fig1.csv"
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "alpha,m,c_of_j,r_bar,lower,upper,mc_kl,mc_kl_stderr"
    assert len(lines) == 101
    assert (out / "manifest.json").exists()
    # argmin lands in the documented window
    import csv as _csv

    rows = list(_csv.DictReader(csv_path.open()))
    best = min(rows, key=lambda r: float(r["upper"]))
    assert 15 <= int(best["m"]) <= 35


def test_toy_fig1_unknown_preset_is_config_error(tmp_path):
    assert main(["toy-fig1", "--preset", "nope", "--out", str(tmp_path)]) == 1


def test_missing_config_is_config_error(tmp_path, capsys):
    rc = main(["sgd-bound", "--config", str(tmp_path / "missing.json"),
               "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key_is_config_error(tmp_path, capsys):
    path = _write_cfg(tmp_path)
    raw = json.loads(path.read_text())
    raw["mystery"] = 1
    path.write_text(json.dumps(raw))
    rc = main(["sgd-bound", "--config", str(path), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "mystery" in capsys.readouterr().err


def test_dry_run_prints_accounting_without_training(tmp_path, capsys):
    path = _write_cfg(tmp_path)
    rc = main(["sgd-bound", "--config", str(path), "--out", str(tmp_path / "o"),
               "--dry-run"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "delta accounting" in out and "grid_size=4" in out
    assert not (tmp_path / "o" / "bound_sweep.csv").exists()


def test_sgd_bound_runs_and_is_byte_identical(tmp_path, capsys):
    path = _write_cfg(tmp_path)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["sgd-bound", "--config", str(path), "--out", str(out1)]) == 0
    assert main(["sgd-bound", "--config", str(path), "--out", str(out2)]) == 0
    a = (out1 / "bound_sweep.csv").read_bytes()
    b = (out2 / "bound_sweep.csv").read_bytes()
    assert a == b
    assert "best alpha" in capsys.readouterr().out


def test_set_override_wins_over_file(tmp_path):
    path = _write_cfg(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["sgd-bound", "--config", str(path), "--out", str(out1),
                 "--set", "alpha_grid=[0.5]"]) == 0
    rows = (out1 / "bound_sweep.csv").read_text().splitlines()
    assert len(rows) == 2  # header + single (alpha, seed) cell
    assert rows[1].startswith("0.5,")
    # nested override reaches the dataset spec
    assert main(["sgd-bound", "--config", str(path), "--out", str(out2),
                 "--set", "alpha_grid=[0.5]", "--set", "dataset.seed=61"]) == 0
    assert (out2 / "bound_sweep.csv").read_bytes() != (out1 / "bound_sweep.csv").read_bytes()


def test_missing_data_file_is_data_error(tmp_path, capsys):
    path = _write_cfg(
        tmp_path,
        dataset={"kind": "idx", "images": str(tmp_path / "none.idx"),
                 "labels": str(tmp_path / "none2.idx")},
    )
    rc = main(["sgd-bound", "--config", str(path), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "data error" in capsys.readouterr().err


def test_l2_sweep_requires_ghost(tmp_path, capsys):
    path = _write_cfg(tmp_path)
    rc = main(["l2-sweep", "--config", str(path), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "ghost" in capsys.readouterr().err


def test_l2_sweep_with_ghost(tmp_path):
    path = _write_cfg(
        tmp_path,
        ghost_dataset={"kind": "synthetic", "generator": "gaussian_pairs",
                       "n": 200, "dim": 6, "separation": 3.0, "seed": 62},
    )
    out = tmp_path / "o"
    assert main(["l2-sweep", "--config", str(path), "--out", str(out)]) == 0
    lines = (out / "l2_sweep.csv").read_text().splitlines()
    assert lines[0] == "alpha,seed,d_prefix,d_ghost"
    assert len(lines) == 3


def test_direct_opt_and_oracle_variance_families(tmp_path):
    path = _write_cfg(tmp_path, alpha_grid=[0.5])
    out = tmp_path / "do"
    assert main(["direct-opt", "--config", str(path), "--out", str(out)]) == 0
    lines = (out / "direct_opt.csv").read_text().splitlines()
    assert lines[0] == "alpha,seed,step,surrogate_bound,final_bound,test_error"
    assert len(lines) >= 2
    out2 = tmp_path / "ov"
    assert main(["oracle-variance", "--config", str(path), "--out", str(out2)]) == 0
    lines = (out2 / "oracle_variance.csv").read_text().splitlines()
    assert lines[0] == "alpha,seed,sigma_p,iso_bound,oracle_bound"


def test_jobs_fanout_matches_serial(tmp_path):
    path = _write_cfg(tmp_path, seeds=[0, 1])
    out1, out2 = tmp_path / "serial", tmp_path / "par"
    assert main(["sgd-bound", "--config", str(path), "--out", str(out1)]) == 0
    assert main(["sgd-bound", "--config", str(path), "--out", str(out2),
                 "--jobs", "2"]) == 0
    assert (out1 / "bound_sweep.csv").read_bytes() == (out2 / "bound_sweep.csv").read_bytes()


def test_manifest_records_accounting(tmp_path):
    path = _write_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["sgd-bound", "--config", str(path), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["delta_accounting"]["grid_size"] == 4
    assert manifest["delta_accounting"]["delta_mc"] == 0.025
    assert manifest["seeds"] == [0]
    assert manifest["grids"]["sigma_p"] == [1e-3, 1e-2]
