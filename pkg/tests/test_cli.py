import json
from pathlib import Path

import pytest

from dwelldos.cli import load_config, main
from dwelldos.errors import ConfigError


def write_config(path: Path, doc: dict) -> str:
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def free_scan_config(tmp_path: Path, count=10, workers=1, **grid_extra) -> str:
    doc = {
        "backend": "stack",
        "system": {"v_left": 0.0, "v_right": 0.0, "layers": [{"d": 2.0, "V": 0.0}]},
        "grid": {"e_min": 0.5, "e_max": 2.0, "count": count, **grid_extra},
        "methods": ["direct", "green"],
        "workers": workers,
    }
    return write_config(tmp_path / "cfg.json", doc)


def lattice_config(tmp_path: Path, **extra) -> str:
    doc = {
        "backend": "lattice",
        "system": {"width": 3, "length": 10, "disorder": {"seed": 7, "v_range": [-0.5, 0.5]}},
        "grid": {"e_min": -1.5, "e_max": 1.5, "count": 60},
        "methods": ["direct", "green"],
        "workers": 1,
    }
    doc.update(extra)
    return write_config(tmp_path / "lat.json", doc)


def dbarrier_config(tmp_path: Path, count=1201) -> str:
    doc = {
        "backend": "stack",
        "system": {
            "layers": [{"d": 0.5, "V": 12.0}, {"d": 2.0, "V": 0.0}, {"d": 0.5, "V": 12.0}]
        },
        "grid": {"e_min": 0.3, "e_max": 8.0, "count": count},
        "methods": ["direct", "green"],
        "workers": 1,
    }
    return write_config(tmp_path / "db.json", doc)


# --------------------------------------------------------------------- config

def test_load_config_round_trip(tmp_path):
    cfg = load_config(free_scan_config(tmp_path))
    assert cfg.backend == "stack"
    assert cfg.grid.count == 10
    assert cfg.methods == ("direct", "green")


def test_config_errors_name_fields(tmp_path):
    with pytest.raises(ConfigError, match="backend"):
        load_config(write_config(tmp_path / "a.json", {"system": {}, "grid": {}}))
    with pytest.raises(ConfigError, match="grid.e_min"):
        load_config(write_config(tmp_path / "b.json", {
            "backend": "stack",
            "system": {"layers": [{"d": 1, "V": 0}]},
            "grid": {"e_max": 1.0, "count": 5},
        }))
    with pytest.raises(ConfigError, match="not valid JSON"):
        p = tmp_path / "c.json"
        p.write_text("{broken", encoding="utf-8")
        load_config(p)
    with pytest.raises(ConfigError, match="region"):
        load_config(write_config(tmp_path / "d.json", {
            "backend": "stack",
            "system": {"layers": [{"d": 1, "V": 0}]},
            "grid": {"e_min": 0.5, "e_max": 1.0, "count": 5},
            "region": {"col_min": 0, "col_max": 1, "row_min": 0, "row_max": 1},
        }))


def test_main_exit_2_on_bad_config(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["scan", "--config", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


# ----------------------------------------------------------------------- scan

def test_scan_free_stack_row_count_and_residuals(tmp_path):
    cfg = free_scan_config(tmp_path, count=10)
    out = tmp_path / "out"
    assert main(["scan", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "scan.csv").read_text().splitlines()
    header, rows = lines[0], lines[1:]
    assert header == "energy,channel,tau_direct,tau_vderiv,dos_green,dos_sum,residual_rel,skipped"
    assert len(rows) == 30  # ALL + left + right per energy
    for row in rows:
        fields = row.split(",")
        assert float(fields[6]) < 1e-12
        assert fields[7] == "false"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["max_residual_rel"] < 1e-12
    assert summary["skipped"] == 0


def test_scan_numbers_round_trip(tmp_path):
    cfg = free_scan_config(tmp_path, count=4)
    out = tmp_path / "out"
    main(["scan", "--config", cfg, "--out", str(out)])
    row = (out / "scan.csv").read_text().splitlines()[1].split(",")
    # 17 significant digits: parsing back reproduces the double exactly
    tau = float(row[2])
    assert format(tau, ".17g") == row[2]


def test_scan_deterministic_across_runs_and_workers(tmp_path):
    out1, out2, out3 = (tmp_path / n for n in ("o1", "o2", "o3"))
    cfg1 = free_scan_config(tmp_path, count=12, workers=1)
    main(["scan", "--config", cfg1, "--out", str(out1)])
    main(["scan", "--config", cfg1, "--out", str(out2)])
    cfg2 = free_scan_config(tmp_path, count=12, workers=3)
    main(["scan", "--config", cfg2, "--out", str(out3)])
    b1 = (out1 / "scan.csv").read_bytes()
    assert b1 == (out2 / "scan.csv").read_bytes()
    assert b1 == (out3 / "scan.csv").read_bytes()


def test_lattice_scan_parallel_determinism(tmp_path):
    out1, out2 = tmp_path / "l1", tmp_path / "l2"
    cfg1 = lattice_config(tmp_path)
    main(["scan", "--config", cfg1, "--out", str(out1)])
    cfg2 = lattice_config(tmp_path, workers=3)
    main(["scan", "--config", cfg2, "--out", str(out2)])
    assert (out1 / "scan.csv").read_bytes() == (out2 / "scan.csv").read_bytes()


def test_workers_env_override(tmp_path, monkeypatch):
    cfg = free_scan_config(tmp_path, count=12, workers=1)
    out_env = tmp_path / "env"
    monkeypatch.setenv("DWELLDOS_WORKERS", "2")
    main(["scan", "--config", cfg, "--out", str(out_env)])
    monkeypatch.delenv("DWELLDOS_WORKERS")
    out_ref = tmp_path / "ref"
    main(["scan", "--config", cfg, "--out", str(out_ref)])
    assert (out_env / "scan.csv").read_bytes() == (out_ref / "scan.csv").read_bytes()


def test_scan_below_threshold_grid(tmp_path):
    doc = {
        "backend": "stack",
        "system": {"v_left": 5.0, "v_right": 5.0, "layers": [{"d": 1.0, "V": 0.0}]},
        "grid": {"e_min": 0.5, "e_max": 2.0, "count": 5},
        "workers": 1,
    }
    cfg = write_config(tmp_path / "below.json", doc)
    out = tmp_path / "out"
    assert main(["scan", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "scan.csv").read_text().splitlines()[1:]
    assert len(rows) == 5
    assert all(r.endswith(",true") for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["warnings"]


def test_scan_with_vderiv_column(tmp_path):
    doc = {
        "backend": "stack",
        "system": {"layers": [{"d": 1.0, "V": 1.0}]},
        "grid": {"e_min": 0.4, "e_max": 0.8, "count": 3},
        "methods": ["direct", "green", "vderiv"],
        "workers": 1,
    }
    cfg = write_config(tmp_path / "v.json", doc)
    out = tmp_path / "out"
    assert main(["scan", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "scan.csv").read_text().splitlines()[1:]
    for row in rows:
        fields = row.split(",")
        assert fields[3] != ""  # tau_vderiv present
        assert abs(float(fields[3]) - float(fields[2])) < 1e-6


# --------------------------------------------------------------------- verify

def test_verify_pass_and_fail_exit_codes(tmp_path, capsys):
    cfg = free_scan_config(tmp_path, count=10)
    assert main(["verify", "--config", cfg, "--tol", "1e-8"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["pass"] is True
    # below the floating-point floor: must fail and report the worst point
    assert main(["verify", "--config", cfg, "--tol", "1e-16"]) == 1
    summary = json.loads(capsys.readouterr().out)
    assert summary["pass"] is False
    assert summary["worst"]


def test_verify_lattice_fixture(tmp_path, capsys):
    cfg = lattice_config(tmp_path)
    assert main(["verify", "--config", cfg, "--tol", "1e-9"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["max_residual_rel"] < 1e-9


def test_verify_requires_both_sides(tmp_path):
    cfg = lattice_config(tmp_path, methods=["direct"])
    assert main(["verify", "--config", cfg, "--tol", "1e-9"]) == 2


# ----------------------------------------------------------------- resonances

def test_resonances_double_barrier(tmp_path):
    cfg = dbarrier_config(tmp_path)
    out = tmp_path / "peaks"
    assert main(["resonances", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "peaks.csv").read_text().splitlines()
    assert lines[0] == "E_peak,kind,channel,height,width,match_distance"
    dos_rows = [l for l in lines[1:] if l.split(",")[1] == "dos"]
    assert len(dos_rows) >= 1
    assert all(r.split(",")[5] != "" for r in dos_rows)  # matched
    summary = json.loads((out / "summary.json").read_text())
    assert summary["matched"] >= 1 and summary["unmatched"] == 0


def test_resonances_free_stack_empty_table(tmp_path):
    cfg = free_scan_config(tmp_path, count=40)
    out = tmp_path / "peaks"
    assert main(["resonances", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "peaks.csv").read_text().splitlines()
    assert lines == ["E_peak,kind,channel,height,width,match_distance"]


def test_resonances_too_coarse_grid(tmp_path, capsys):
    cfg = dbarrier_config(tmp_path, count=3)
    out = tmp_path / "peaks"
    assert main(["resonances", "--config", cfg, "--out", str(out)]) == 2
    assert "insufficient" in capsys.readouterr().err.lower()
