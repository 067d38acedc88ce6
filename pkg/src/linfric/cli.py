"""Command-line front end: ``linfric {trace,fig4,rotate,probe,fuzz} --config run.yaml``.

Every run reads a YAML scenario file, validates it against the schema of
its experiment before anything is computed or written, then writes
delimited-text tables (``#`` comment header with the seed, one row naming
columns and units), a human-readable summary and ``run_manifest.json``
into ``--out``.  Physical parameters have no defaults and must be stated.

Exit status: 0 on success, 1 when an invariant or tolerance check fails,
2 on a usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import platform
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numba
import numpy as np
import yaml

from . import __version__
from .assembly import (damping_coefficient, load_snapshot, prepare_anisotropic, rigid_rotate_experiment,
                       save_snapshot)
from .contact_model import ContactParams, ContactState, conventional_update, update_contact
from .errors import ConfigError
from .experiments import fig4_sweep, fuzz_contacts
from .kinematics import StepKinematics, check_unit
from .probe_harness import ProbeSettings, compare_kernels, probe_angles, run_suite

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2

CORRECTIONS = {"none": (False, False), "projection": (True, False), "both": (True, True)}

# ---------------------------------------------------------------------------
# schemas
# ---------------------------------------------------------------------------

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_COUNT = {"type": "integer", "minimum": 1}

_CONTACT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kn_N_per_m", "kt_N_per_m", "mu"],
    "properties": {"kn_N_per_m": _POS, "kt_N_per_m": _POS, "mu": _POS, "nu_N_s_per_m": _NONNEG},
}

_ASSEMBLY = {
    "type": "object",
    "additionalProperties": False,
    "oneOf": [
        {"required": ["snapshot"]},
        {"required": ["particles", "radius_m", "radius_spread", "density_kg_per_m3", "p0_Pa",
                      "q_over_p", "damping_ratio"]},
    ],
    "properties": {
        "snapshot": {"type": "string"},
        "particles": {"type": "integer", "minimum": 2},
        "radius_m": _POS,
        "radius_spread": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "density_kg_per_m3": _POS,
        "p0_Pa": _POS,
        "q_over_p": {"type": "number", "minimum": 0},
        "damping_ratio": _POS,
    },
}


def _schema(kind: str, body: dict, needs_contact: bool = True) -> dict:
    """Top-level schema; assembly experiments take ``contact`` only when they build a packing."""
    required = ["experiment", "seed", kind] + (["contact"] if needs_contact else [])
    props = {"experiment": {"const": kind}, "seed": {"type": "integer", "minimum": 0},
             "corrections": {"enum": list(CORRECTIONS)}, "contact": _CONTACT, kind: body}
    return {"type": "object", "additionalProperties": False, "required": required, "properties": props}


SCHEMAS = {
    "trace": _schema("trace", {
        "type": "object", "additionalProperties": False,
        "required": ["kernel", "normal", "zeta0_m", "ft0_N", "steps"],
        "properties": {
            "kernel": {"enum": ["refined", "conventional"]},
            "normal": _VEC3,
            "zeta0_m": {"type": "number"},
            "ft0_N": _VEC3,
            "sliding": {"type": "boolean"},
            "dt_s": _POS,
            "steps": {"type": "array", "items": {
                "type": "object", "additionalProperties": False, "required": ["du_m", "zeta_m"],
                "properties": {"du_m": _VEC3, "zeta_m": {"type": "number"},
                               "dtheta_p_rad": _VEC3, "dtheta_q_rad": _VEC3}}},
        }}),
    "fig4": _schema("fig4", {
        "type": "object", "additionalProperties": False,
        "required": ["ratio_min", "ratio_max", "points", "fn_N", "substeps", "tolerance_deg"],
        "properties": {"ratio_min": _POS, "ratio_max": _POS, "points": {"type": "integer", "minimum": 2},
                       "fn_N": _POS, "substeps": _COUNT, "tolerance_deg": _POS}}),
    "rotate": _schema("rotate", needs_contact=False, body={
        "type": "object", "additionalProperties": False,
        "required": ["assembly", "axis", "angle_deg", "increments", "tolerance"],
        "properties": {"assembly": _ASSEMBLY, "axis": _VEC3, "angle_deg": {"type": "number"},
                       "increments": {"type": "integer", "minimum": 0}, "tolerance": _POS}}),
    "probe": _schema("probe", needs_contact=False, body={
        "type": "object", "additionalProperties": False,
        "required": ["assembly", "magnitude", "steps_per_probe", "directions", "kernels"],
        "properties": {"assembly": _ASSEMBLY, "magnitude": _POS, "steps_per_probe": _COUNT,
                       "directions": {"type": "integer", "minimum": 3},
                       "kernels": {"type": "array", "minItems": 1, "uniqueItems": True,
                                   "items": {"enum": ["refined", "conventional"]}},
                       "relax_tol": _POS, "servo_tol": _POS, "max_passes": _COUNT}}),
    "fuzz": _schema("fuzz", {
        "type": "object", "additionalProperties": False, "required": ["cases"],
        "properties": {"cases": _COUNT}}),
}

# which experiment field ``--steps`` overrides
STEPS_FIELD = {"fig4": "substeps", "rotate": "increments", "probe": "steps_per_probe", "fuzz": "cases"}


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------

class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e5`` and ``1.0e5`` as floats (YAML 1.1 wants ``1.0e+5``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                |[-+]?\.(?:inf|Inf|INF)
                |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _node_line(root, path) -> int | None:
    """1-based source line of the YAML node at ``path`` (deepest existing ancestor)."""
    node = root
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def load_config(path, kind: str) -> dict:
    """Parse and validate a scenario file for experiment ``kind``.

    Raises
    ------
    ConfigError
        With one line per problem, each naming the source line and field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    try:
        data = yaml.load(text, Loader=_Loader)
        root = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    if data.get("experiment") != kind:
        raise ConfigError(f"{path}: experiment is {data.get('experiment')!r}, but the command is {kind!r}")
    validator = jsonschema.Draft202012Validator(SCHEMAS[kind])
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(map(str, e.absolute_path)) or "<root>"
            lines.append(f"{path}:{_node_line(root, list(e.absolute_path))}: {where}: {e.message}")
        raise ConfigError("\n".join(lines))
    if kind in ("rotate", "probe"):
        from_snapshot = "snapshot" in data[kind]["assembly"]
        if from_snapshot and "contact" in data:
            raise ConfigError(f"{path}:{_node_line(root, ['contact'])}: contact: parameters come from "
                              "the snapshot; remove this section")
        if not from_snapshot and "contact" not in data:
            raise ConfigError(f"{path}:1: contact: required to build a packing")
    return data


def apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    kind = cfg["experiment"]
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.corrections is not None:
        cfg["corrections"] = args.corrections
    cfg.setdefault("corrections", "both")
    if args.steps is not None:
        if kind not in STEPS_FIELD:
            raise ConfigError(f"--steps does not apply to {kind}")
        if args.steps < (0 if kind == "rotate" else 1):
            raise ConfigError(f"--steps must be positive, got {args.steps}")
        cfg[kind][STEPS_FIELD[kind]] = args.steps
    return cfg


def contact_params(cfg: dict) -> ContactParams:
    c = cfg["contact"]
    return ContactParams(kn=c["kn_N_per_m"], kt=c["kt_N_per_m"], mu=c["mu"], nu=c.get("nu_N_s_per_m", 0.0))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

@dataclass
class Table:
    columns: list[str]
    rows: list[list]

    def render(self, seed: int, title: str) -> str:
        head = [f"# {title}", f"# seed={seed}", ",".join(self.columns)]
        return "\n".join(head + [",".join(_fmt(v) for v in row) for row in self.rows]) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


@dataclass
class Outcome:
    tables: dict[str, Table]
    summary: list[str]
    ok: bool
    packing: object | None = None   # assembly built by the run, saved as packing.txt


def write_outputs(out: Path, kind: str, cfg: dict, outcome: Outcome) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, table in outcome.tables.items():
        (out / f"{name}.csv").write_text(table.render(cfg["seed"], f"linfric {kind}: {name}"))
    (out / f"{kind}_summary.txt").write_text("\n".join(outcome.summary) + "\n")
    manifest = {
        "experiment": kind,
        "seed": cfg["seed"],
        "config_sha256": config_hash(cfg),
        "config": cfg,
        "status": "PASS" if outcome.ok else "FAIL",
        "outputs": sorted([f"{n}.csv" for n in outcome.tables] + [f"{kind}_summary.txt"]
                          + (["packing.txt"] if outcome.packing is not None else [])),
        "versions": {"linfric": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "numba": numba.__version__},
    }
    if outcome.packing is not None:
        save_snapshot(outcome.packing, out / "packing.txt")
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_trace(cfg: dict) -> Outcome:
    """Drive one contact through the scripted (movement, overlap) steps."""
    t = cfg["trace"]
    params = contact_params(cfg)
    projection, twirl = CORRECTIONS[cfg["corrections"]]
    try:
        n = check_unit(t["normal"], "normal")
    except ValueError as exc:
        raise ConfigError(f"trace/normal: {exc}") from exc
    update = update_contact if t["kernel"] == "refined" else conventional_update
    state = ContactState(zeta=t["zeta0_m"], ft=np.asarray(t["ft0_N"], float), n=n,
                         sliding=t.get("sliding", False))
    cols = ["step", "zeta_m", "fn_N", "ftx_N", "fty_N", "ftz_N", "slid", "alpha_o", "alpha_s",
            "theta_t_deg", "theta_end_deg", "wn_J", "dwt_J", "dwt_rev_J", "dwt_irrev_J"]
    rows = []
    for k, s in enumerate(t["steps"], 1):
        kin = StepKinematics.from_relative(s["du_m"], n, s.get("dtheta_p_rad", np.zeros(3)),
                                           s.get("dtheta_q_rad", np.zeros(3)))
        state, r = update(state, params, kin, s["zeta_m"], dt=t.get("dt_s"), projection=projection,
                          twirl=twirl)
        deg = (lambda a: None if a is None else math.degrees(a))
        rows.append([k, s["zeta_m"], r.fn_end, *r.ft_end, r.slid, r.alpha_o, r.alpha_s,
                     deg(r.theta_t), deg(r.theta_end), r.wn, r.dwt, r.dwt_rev, r.dwt_irrev])
    ftn = [np.linalg.norm(row[3:6]) / (params.mu * row[2]) for row in rows if row[2] > 0]
    worst = max(ftn, default=0.0)
    ok = worst <= 1 + params.eps
    summary = [f"trace: {len(rows)} steps, kernel={t['kernel']}, corrections={cfg['corrections']}",
               f"largest |ft|/(mu fn) = {worst:.12g}  {'PASS' if ok else 'FAIL'}"]
    return Outcome({"trace": Table(cols, rows)}, summary, ok)


def cmd_fig4(cfg: dict) -> Outcome:
    """Final force angle against movement size for a movement perpendicular to the force."""
    f = cfg["fig4"]
    c = cfg["contact"]
    ratios = np.geomspace(f["ratio_min"], f["ratio_max"], f["points"])
    rows = fig4_sweep(ratios, n_sub=f["substeps"], fn=f["fn_N"], mu=c["mu"], kt=c["kt_N_per_m"],
                      kn=c["kn_N_per_m"])
    cols = ["ratio", "refined_deg", "conventional_deg", "oracle_deg", "closed_form_deg"]
    table = [[r["ratio"], r["refined"], r["conventional"], r["oracle"], r["closed_form"]] for r in rows]
    worst = max(abs(r["refined"] - r["oracle"]) for r in rows)
    ok = worst <= f["tolerance_deg"]
    summary = [f"fig4: {len(rows)} ratios in [{f['ratio_min']}, {f['ratio_max']}], {f['substeps']} oracle substeps",
               f"largest |refined - oracle| = {worst:.4g} deg (tolerance {f['tolerance_deg']})  "
               f"{'PASS' if ok else 'FAIL'}"]
    return Outcome({"fig4": Table(cols, table)}, summary, ok)


def build_assembly(desc: dict, cfg: dict):
    """Load a snapshot or build an anisotropic packing from the config."""
    if "snapshot" in desc:
        return load_snapshot(desc["snapshot"])
    c = cfg["contact"]
    r = desc["radius_m"]
    nu = damping_coefficient(r * (1 - desc["radius_spread"]), desc["density_kg_per_m3"], c["kn_N_per_m"],
                             desc["damping_ratio"])
    params = ContactParams(kn=c["kn_N_per_m"], kt=c["kt_N_per_m"], mu=c["mu"], nu=nu)
    return prepare_anisotropic(desc["particles"], r, params, seed=cfg["seed"], p0=desc["p0_Pa"],
                               q_over_p=desc["q_over_p"], radius_spread=desc["radius_spread"],
                               density=desc["density_kg_per_m3"])


def _tensor_rows(name: str, s: np.ndarray) -> list[list]:
    return [[name, i + 1, j + 1, s[i, j]] for i in range(3) for j in range(3)]


def cmd_rotate(cfg: dict) -> Outcome:
    """Rigid rotation of an equilibrated packing and the counter-rotated stress."""
    r = cfg["rotate"]
    a = build_assembly(r["assembly"], cfg)
    projection, twirl = CORRECTIONS[cfg["corrections"]]
    res = rigid_rotate_experiment(a, r["axis"], math.radians(r["angle_deg"]), r["increments"],
                                  projection=projection, twirl=twirl)
    err = res.relative_error
    ok = err <= r["tolerance"]
    rows = (_tensor_rows("before", res.sigma_before) + _tensor_rows("rotated", res.sigma_rotated)
            + _tensor_rows("restored", res.sigma_restored))
    summary = [f"rotate: {a.n_particles} particles, {len(a.contacts)} contacts, "
               f"{r['angle_deg']} deg about {r['axis']} in {r['increments']} increments",
               f"corrections={cfg['corrections']}",
               f"Frobenius relative error = {err:.6e} (tolerance {r['tolerance']})  {'PASS' if ok else 'FAIL'}"]
    built = None if "snapshot" in r["assembly"] else a
    return Outcome({"stress": Table(["tensor", "i", "j", "sigma_Pa"], rows)}, summary, ok, built)


def cmd_probe(cfg: dict) -> Outcome:
    """Probe suite under each requested kernel, with circle fits."""
    p = cfg["probe"]
    a = build_assembly(p["assembly"], cfg)
    a.projection, a.twirl = CORRECTIONS[cfg["corrections"]]
    settings = ProbeSettings(magnitude=p["magnitude"], n_steps=p["steps_per_probe"],
                             **{k: p[k] for k in ("relax_tol", "servo_tol", "max_passes") if k in p})
    angles = probe_angles(p["directions"])
    if sorted(p["kernels"]) == ["conventional", "refined"]:
        cmp = compare_kernels(a, angles, settings)
        suites = [cmp.refined, cmp.conventional]
    else:
        suites = [run_suite(a, angles, settings, kernel=p["kernels"][0])]
    cols = ["kernel", "strain_angle_deg", "dir_vol", "dir_dev", "radius_1/Pa", "point_vol_1/Pa",
            "point_dev_1/Pa", "flow_vol", "flow_dev", "servo_error", "asymmetry", "passes", "flagged"]
    rows = [[s.kernel, math.degrees(q.angle), *q.direction, q.radius, *q.point, *q.flow, q.servo_error,
             q.asymmetry, q.passes, q.flagged] for s in suites for q in s.probes]
    fit_cols = ["kernel", "circle", "diameter_1/Pa", "tilt_deg", "residual_1/Pa"]
    fit_rows = []
    for s in suites:
        for name, fit in (("main", s.fit), ("complementary", s.complementary)):
            if fit is not None:
                fit_rows.append([s.kernel, name, fit.diameter, math.degrees(fit.tilt), fit.residual])
    flagged = sum(q.flagged for s in suites for q in s.probes)
    summary = [f"probe: {a.n_particles} particles, mobilized fraction {a.mobilized_fraction():.3f}, "
               f"{p['directions']} directions, magnitude {p['magnitude']}, {p['steps_per_probe']} steps per probe"]
    for s in suites:
        d = f"{s.fit.diameter:.6e}" if s.fit else "n/a"
        comp = "present" if s.complementary else "absent"
        summary.append(f"{s.kernel}: main diameter {d} 1/Pa, complementary circle {comp}")
    if len(suites) == 2 and suites[0].fit and suites[1].fit:
        summary.append(f"conventional/refined diameter ratio = {suites[1].fit.diameter / suites[0].fit.diameter:.6f}")
    summary.append(f"flagged probes: {flagged}  {'PASS' if flagged == 0 else 'FAIL'}")
    built = None if "snapshot" in p["assembly"] else a
    return Outcome({"probe_points": Table(cols, rows), "probe_fits": Table(fit_cols, fit_rows)},
                   summary, flagged == 0, built)


def cmd_fuzz(cfg: dict) -> Outcome:
    """Random single-contact updates checked against the friction limit and tangent plane."""
    params = contact_params(cfg)
    projection, twirl = CORRECTIONS[cfg["corrections"]]
    rep = fuzz_contacts(np.random.default_rng(cfg["seed"]), cfg["fuzz"]["cases"], params,
                        projection=projection, twirl=twirl)
    cols = ["cases", "limit_violations", "plane_violations", "worst_limit_ratio", "worst_plane_ratio"]
    row = [rep.cases, rep.limit_violations, rep.plane_violations, rep.worst_limit_ratio, rep.worst_plane_ratio]
    summary = [f"fuzz: {rep.cases} cases, corrections={cfg['corrections']}",
               f"friction-limit violations {rep.limit_violations}, tangent-plane violations {rep.plane_violations}",
               f"worst |ft|/(mu fn) = {rep.worst_limit_ratio:.15g}, worst |ft.n|/|ft| = {rep.worst_plane_ratio:.3e}",
               "PASS" if rep.ok else "FAIL"]
    return Outcome({"fuzz": Table(cols, [row])}, summary, rep.ok)


COMMANDS = {"trace": cmd_trace, "fig4": cmd_fig4, "rotate": cmd_rotate, "probe": cmd_probe, "fuzz": cmd_fuzz}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="linfric", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", required=True, help="YAML scenario file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--steps", type=int,
                       help=f"override {STEPS_FIELD[name]!r}" if name in STEPS_FIELD else argparse.SUPPRESS)
        p.add_argument("--corrections", choices=list(CORRECTIONS),
                       help="objectivity corrections (default: config value, else both)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind = args.command
    out = Path(args.out)
    try:
        cfg = apply_overrides(load_config(args.config, kind), args)
    except ConfigError as exc:
        print(f"linfric {kind}: configuration error\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        outcome = COMMANDS[kind](cfg)
    except ConfigError as exc:
        print(f"linfric {kind}: configuration error\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"linfric {kind}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    write_outputs(out, kind, cfg, outcome)
    print("\n".join(outcome.summary))
    return EXIT_OK if outcome.ok else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
