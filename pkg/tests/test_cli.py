import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from linfric.assembly import save_snapshot
from linfric.cli import EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, load_config, main
from linfric.probe_harness import ProbeSettings, elastic_stiffness

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CONTACT = {"kn_N_per_m": 1.0e5, "kt_N_per_m": 8.0e4, "mu": 0.5}


def write(tmp_path, cfg, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path


def read_table(path):
    lines = Path(path).read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    cols = body[0].split(",")
    return cols, [dict(zip(cols, row.split(","))) for row in body[1:]]


def trace_cfg(steps, **extra):
    t = {"kernel": "refined", "normal": [0, 0, 1], "zeta0_m": 0.0, "ft0_N": [0, 0, 0], "steps": steps}
    t.update(extra)
    return {"experiment": "trace", "seed": 0, "contact": dict(CONTACT), "trace": t}


def run(tmp_path, cfg, *extra, out="out"):
    return main([cfg["experiment"], "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / out),
                 *extra])


# --- trace -----------------------------------------------------------------

def test_trace_pure_compression(tmp_path):
    steps = [{"du_m": [0, 0, -1e-6], "zeta_m": 1e-6 * k} for k in range(1, 6)]
    assert run(tmp_path, trace_cfg(steps)) == EXIT_OK
    cols, rows = read_table(tmp_path / "out" / "trace.csv")
    assert cols[:3] == ["step", "zeta_m", "fn_N"]
    fn = [float(r["fn_N"]) for r in rows]
    assert all(b > a for a, b in zip(fn, fn[1:]))
    assert all(float(r[c]) == 0.0 for r in rows for c in ("ftx_N", "fty_N", "ftz_N"))


def test_trace_limit_crossing_reports_one_onset(tmp_path):
    steps = ([{"du_m": [0, 0, -2e-6], "zeta_m": 2e-6}]
             + [{"du_m": [4e-7, 0, 0], "zeta_m": 2e-6} for _ in range(6)])
    assert run(tmp_path, trace_cfg(steps)) == EXIT_OK
    _, rows = read_table(tmp_path / "out" / "trace.csv")
    onset = [r for r in rows if r["alpha_s"] != ""]
    assert len(onset) == 1
    assert 0 < float(onset[0]["alpha_s"]) < 1


def test_trace_empty_script_is_header_only(tmp_path):
    assert run(tmp_path, trace_cfg([])) == EXIT_OK
    cols, rows = read_table(tmp_path / "out" / "trace.csv")
    assert rows == [] and "alpha_s" in cols


def test_trace_corrections_flag(tmp_path):
    # a spin about the normal turns the stored force only when the twirl is on
    steps = [{"du_m": [0, 0, -2e-6], "zeta_m": 2e-6}, {"du_m": [1e-7, 0, 0], "zeta_m": 2e-6},
             {"du_m": [0, 0, 0], "zeta_m": 2e-6, "dtheta_p_rad": [0, 0, 0.1], "dtheta_q_rad": [0, 0, 0.1]}]
    fty = {}
    for mode in ("both", "none"):
        assert run(tmp_path, trace_cfg(steps), "--corrections", mode, out=mode) == EXIT_OK
        fty[mode] = float(read_table(tmp_path / mode / "trace.csv")[1][-1]["fty_N"])
    assert fty["none"] == 0.0
    assert fty["both"] == pytest.approx(8e4 * 1e-7 * math.sin(0.1), rel=1e-12)


# --- fig4 -------------------------------------------------------------------

def test_fig4_table(tmp_path):
    cfg = load_config(CONFIGS / "fig4.yaml", "fig4")
    cfg["fig4"].update(ratio_min=1e-3, ratio_max=1.0, points=2, substeps=200_000)
    assert run(tmp_path, cfg) == EXIT_OK
    cols, rows = read_table(tmp_path / "out" / "fig4.csv")
    assert cols == ["ratio", "refined_deg", "conventional_deg", "oracle_deg", "closed_form_deg"]
    small, unit = rows
    assert float(small["refined_deg"]) == pytest.approx(-90, abs=0.1)
    assert float(unit["refined_deg"]) == pytest.approx(-40.395, abs=0.01)
    assert float(unit["conventional_deg"]) == pytest.approx(-45, abs=1e-9)


# --- fuzz, manifest and determinism -------------------------------------------

def fuzz_cfg(cases=2000):
    return {"experiment": "fuzz", "seed": 3, "contact": {"kn_N_per_m": 1.0, "kt_N_per_m": 0.8, "mu": 0.5},
            "fuzz": {"cases": cases}}


def test_fuzz_passes_and_writes_manifest(tmp_path):
    assert run(tmp_path, fuzz_cfg()) == EXIT_OK
    out = tmp_path / "out"
    _, rows = read_table(out / "fuzz.csv")
    assert rows[0]["limit_violations"] == "0" and rows[0]["plane_violations"] == "0"
    m = json.loads((out / "run_manifest.json").read_text())
    assert m["seed"] == 3 and m["status"] == "PASS" and len(m["config_sha256"]) == 64
    assert {"linfric", "python", "numpy", "numba"} <= set(m["versions"])
    assert "fuzz.csv" in m["outputs"]
    assert "seed=3" in (out / "fuzz.csv").read_text().splitlines()[1]


def test_identical_runs_are_byte_identical(tmp_path):
    cfg = fuzz_cfg(500)
    for name in ("a", "b"):
        assert run(tmp_path, cfg, out=name) == EXIT_OK
    for f in ("fuzz.csv", "run_manifest.json", "fuzz_summary.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_overrides_enter_manifest(tmp_path):
    assert run(tmp_path, fuzz_cfg(), "--seed", "9", "--steps", "300", "--corrections", "projection") == EXIT_OK
    m = json.loads((tmp_path / "out" / "run_manifest.json").read_text())
    assert m["seed"] == 9 and m["config"]["fuzz"]["cases"] == 300 and m["config"]["corrections"] == "projection"


# --- validation ----------------------------------------------------------------

def test_missing_physical_parameter_is_rejected(tmp_path, capsys):
    cfg = fuzz_cfg()
    del cfg["contact"]["mu"]
    assert run(tmp_path, cfg) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "'mu' is a required property" in err and "run.yaml:" in err
    assert not (tmp_path / "out").exists()


def test_validation_names_the_line(tmp_path, capsys):
    text = "experiment: fuzz\nseed: 1\ncontact:\n  kn_N_per_m: 1.0\n  kt_N_per_m: -2.0\n  mu: 0.5\nfuzz:\n  cases: 10\n"
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert main(["fuzz", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_USAGE
    assert "bad.yaml:5: contact/kt_N_per_m" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("mutate", [
    lambda c: c["fuzz"].update(extra=1),
    lambda c: c.update(seed=-1),
    lambda c: c.update(experiment="trace"),
    lambda c: c["fuzz"].update(cases="many"),
])
def test_schema_violations(tmp_path, mutate):
    cfg = fuzz_cfg()
    mutate(cfg)
    assert run(tmp_path, cfg) == EXIT_USAGE
    assert not (tmp_path / "out").exists()


def test_non_unit_normal_is_a_config_error(tmp_path):
    assert run(tmp_path, trace_cfg([], normal=[0, 0, 2])) == EXIT_USAGE
    assert not (tmp_path / "out").exists()


def test_unreadable_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("experiment: [fuzz\n")
    assert main(["fuzz", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_USAGE


def test_shipped_configs_validate(tmp_path):
    for path in CONFIGS.glob("*.yaml"):
        cfg = load_config(path, path.stem)
        assert isinstance(cfg.get("contact", {}).get("kn_N_per_m", 1.0), float)


# --- assembly commands -------------------------------------------------------------

def snapshot_cfg(kind, body, path):
    body = dict(body, assembly={"snapshot": str(path)})
    return {"experiment": kind, "seed": 2, kind: body}


def test_rotate_reports_pass_and_fail(tmp_path, small_packing, capsys):
    snap = tmp_path / "packing.txt"
    save_snapshot(small_packing, snap)
    body = {"axis": [1, 0, 0], "angle_deg": 90.0, "increments": 1000, "tolerance": 1e-3}
    cfg = snapshot_cfg("rotate", body, snap)
    assert run(tmp_path, cfg, out="on") == EXIT_OK
    assert "Frobenius relative error" in capsys.readouterr().out
    assert run(tmp_path, cfg, "--corrections", "none", out="off") == EXIT_VIOLATION
    _, rows = read_table(tmp_path / "on" / "stress.csv")
    assert {r["tensor"] for r in rows} == {"before", "rotated", "restored"}


def test_snapshot_and_contact_are_exclusive(tmp_path, small_packing):
    snap = tmp_path / "packing.txt"
    save_snapshot(small_packing, snap)
    cfg = snapshot_cfg("rotate", {"axis": [1, 0, 0], "angle_deg": 0.0, "increments": 0, "tolerance": 1e-3}, snap)
    cfg["contact"] = dict(CONTACT)
    assert run(tmp_path, cfg) == EXIT_USAGE


def test_probe_on_elastic_packing_has_no_plastic_strain(tmp_path, small_packing):
    a = small_packing.copy()
    a.params = replace(a.params, mu=1e12)
    snap = tmp_path / "elastic.txt"
    save_snapshot(a, snap)
    body = {"magnitude": 6e-6, "steps_per_probe": 30, "directions": 3, "kernels": ["refined", "conventional"],
            "relax_tol": 1e-6}
    assert run(tmp_path, snapshot_cfg("probe", body, snap)) == EXIT_OK
    _, rows = read_table(tmp_path / "out" / "probe_points.csv")
    assert len(rows) == 6
    radius = np.array([float(r["radius_1/Pa"]) for r in rows])
    # the servo returns to within 1e-3 of the stress increment, which bounds the leftover strain
    K = elastic_stiffness(a, ProbeSettings(magnitude=6e-6, n_steps=30, relax_tol=1e-6))
    assert np.all(radius <= 2e-3 * np.linalg.norm(np.linalg.inv(K), 2))
