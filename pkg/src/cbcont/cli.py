"""``cbc`` command line: equilibrium, branch, surface and compare runs from a YAML config."""
from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .continuation import (
    CorrectorFailure,
    EqPoint,
    EqStepControl,
    StepControl,
    branch_distance,
    correct_equilibrium,
    detect_folds,
    seed_points,
    track_branch,
    track_branch_arclength,
    track_equilibrium_branch,
)
from .control import ControlLoop, FilterDesignError, FilterSpec, LoopSettings, PDGains, SettleTimeout
from .export import SCHEMA_VERSION, write_branch, write_csv, write_json, write_traces
from .plant import SCALAR_SYSTEMS, PlantConfig, PlantFault, make_plant
from .signal import InvalidWindowError
from .surface import (
    InsufficientDataError,
    RBFConditioningError,
    SurfaceData,
    build_interpolant,
    constant_amplitude_slices,
    extract_fold_curve,
    locate_cusp,
    loo_rms,
    sweep_branches,
)

logger = logging.getLogger("cbcont")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

INF = math.inf


class ConfigError(ValueError):
    def __init__(self, message, source="<config>", line=None):
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Field:
    kind: str
    default: object
    nullable: bool = False
    choices: tuple = ()


F = Field

SCHEMA = {
    "plant": {
        "model": F("choice", "duffing", choices=("duffing",)),
        "omega0": F("float", 2.0 * math.pi * 20.0),
        "zeta": F("float", 0.03),
        "gamma": F("float", 9267.0),
        "input_gain": F("float", None, nullable=True),
        "sample_rate": F("float", 5000.0),
        "noise_std": F("float", 0.0),
        "rng_seed": F("int", 0),
        "divergence_bound": F("float", 1e3),
    },
    "control": {
        "kp": F("float", 0.2),
        "kd": F("float", -0.004),
        "filter_order": F("int", 4),
        "filter_cutoff_hz": F("float", 75.0, nullable=True),
        "harmonics": F("int", 7),
        "max_periods": F("int", 200),
        "stationarity_count": F("int", 5),
        "rel_tol": F("float", 1e-3),
        "amplitude_floor": F("float", 1e-6),
        "forcing_floor": F("float", 1e-6),
        "transient_skip_periods": F("int", 3),
        "reference_path": F("choice", "matched", choices=("matched", "analytic")),
    },
    "continuation": {
        "corrector": F("choice", "fixed_point", choices=("fixed_point", "pseudo_arclength")),
        "tol": F("float", 1e-3),
        "max_iter": F("int", 8),
        "min_iter": F("int", 1),
        "relax": F("float", 1.0),
        "invasive_tol": F("float", 0.05),
        "fd_rel": F("float", 1e-3),
        "seed_amplitudes": F("floats", [0.02, 0.024]),
        "h": F("float", 1.0),
        "h_min": F("float", 1.0 / 16.0),
        "h_max": F("float", 2.0),
        "shrink": F("float", 0.5),
        "grow": F("float", 1.5),
        "max_step": F("float", 0.03),
        "max_points": F("int", 60),
        "max_amplitude": F("float", 1.3),
        "max_forcing": F("float", None, nullable=True),
        "classify": F("bool", True),
    },
    "equilibrium": {
        "system": F("choice", "fold_normal_form", choices=tuple(SCALAR_SYSTEMS)),
        "k": F("float", 1.0),
        "seeds": F("points", [[1.0, 1.0], [0.9801, 0.99]]),
        "sample_rate": F("float", 100.0),
        "h": F("float", 1.0),
        "h_min": F("float", 1.0 / 16.0),
        "h_max": F("float", 1.0),
        "max_points": F("int", 200),
        "p_min": F("float", None, nullable=True),
        "p_max": F("float", None, nullable=True),
        "x_min": F("float", -0.4),
        "x_max": F("float", None, nullable=True),
        "authority_tol": F("float", 1e-3),
        "rate_tol": F("float", 1e-8),
        "max_time": F("float", 200.0),
    },
    "sweep": {
        "f_start_hz": F("float", 18.0),
        "f_stop_hz": F("float", 24.0),
        "f_step_hz": F("float", 0.2),
        "frequency_hz": F("float", 22.0),
        "workers": F("int", 1),
        "min_success": F("float", 0.8),
    },
    "surface": {
        "rho": F("float", None, nullable=True),
        "rho_factor": F("float", 30.0),
        "levels": F("floats", [0.01, 0.02, 0.04, 0.06, 0.1]),
        "anchors": F("bool", True),
        "slice_step": F("float", 0.005),
    },
    "output": {
        "dir": F("str", "cbc-out"),
    },
}


def _lines(text):
    """Map ``(section,)`` and ``(section, key)`` to 1-based source lines."""
    out = {}
    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if not isinstance(root, yaml.MappingNode):
        return out, root
    for k, v in root.value:
        out[(k.value,)] = k.start_mark.line + 1
        if isinstance(v, yaml.MappingNode):
            for kk, vv in v.value:
                out[(k.value, kk.value)] = kk.start_mark.line + 1
    return out, root


def _coerce(field: Field, value, where):
    if value is None:
        if field.nullable:
            return None
        raise ValueError(f"{where} must not be null")
    kind = field.kind
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where} must be a number, got {value!r}")
        value = float(value)
        if math.isnan(value):
            raise ValueError(f"{where} must not be NaN")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{where} must be an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"{where} must be true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ValueError(f"{where} must be a string, got {value!r}")
        return value
    if kind == "choice":
        if value not in field.choices:
            raise ValueError(f"{where} must be one of {list(field.choices)}, got {value!r}")
        return value
    if kind == "floats":
        if not isinstance(value, list) or not value:
            raise ValueError(f"{where} must be a non-empty list of numbers")
        return [_coerce(Field("float", None), v, where) for v in value]
    if kind == "points":
        if (not isinstance(value, list) or len(value) != 2
                or not all(isinstance(v, list) and len(v) == 2 for v in value)):
            raise ValueError(f"{where} must be two [p, x] pairs")
        return [[_coerce(Field("float", None), c, where) for c in v] for v in value]
    raise AssertionError(kind)


class RunConfig:
    """Validated, fully resolved run configuration."""

    def __init__(self, sections, source="<config>", lines=None):
        self.sections = sections
        self.source = source
        self._lines = lines or {}
        self._check()

    @classmethod
    def from_text(cls, text, source="<config>", overrides=None):
        try:
            lines, root = _lines(text)
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", source,
                              mark.line + 1 if mark else None) from None
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("top level must be a mapping of sections", source, 1)
        sections = {}
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
                              source, lines.get(("schema_version",)))
        for name in raw:
            if name != "schema_version" and name not in SCHEMA:
                raise ConfigError(f"unknown section {name!r}; allowed: {sorted(SCHEMA)}", source,
                                  lines.get((name,)))
        for name, fields in SCHEMA.items():
            given = raw.get(name) or {}
            if not isinstance(given, dict):
                raise ConfigError(f"section {name!r} must be a mapping", source, lines.get((name,)))
            for key in given:
                if key not in fields:
                    raise ConfigError(f"unknown key {key!r} in section {name!r}; allowed: {sorted(fields)}",
                                      source, lines.get((name, key)))
            resolved = {}
            for key, field in fields.items():
                value = given.get(key, copy.deepcopy(field.default))
                try:
                    resolved[key] = _coerce(field, value, f"{name}.{key}")
                except ValueError as exc:
                    raise ConfigError(str(exc), source, lines.get((name, key))) from None
            sections[name] = resolved
        for (name, key), value in (overrides or {}).items():
            sections[name][key] = value
        return cls(sections, source, lines)

    @classmethod
    def from_file(cls, path, overrides=None):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
        return cls.from_text(text, str(path), overrides)

    def _err(self, message, section, key=None):
        line = self._lines.get((section, key)) or self._lines.get((section,))
        return ConfigError(message, self.source, line)

    def _check(self):
        sw = self.sections["sweep"]
        if not sw["f_step_hz"] > 0:
            raise self._err("f_step_hz must be positive", "sweep", "f_step_hz")
        if sw["f_stop_hz"] < sw["f_start_hz"]:
            raise self._err(f"empty sweep range: f_stop_hz {sw['f_stop_hz']} < f_start_hz {sw['f_start_hz']}",
                            "sweep", "f_stop_hz")
        if len(self.frequencies_hz()) < 2:
            raise self._err("sweep range must contain at least two frequencies", "sweep", "f_stop_hz")
        if not 0 < sw["min_success"] <= 1:
            raise self._err("min_success must lie in (0, 1]", "sweep", "min_success")
        if sw["workers"] < 1:
            raise self._err("workers must be >= 1", "sweep", "workers")
        c = self.sections["continuation"]
        if len(c["seed_amplitudes"]) != 2 or c["seed_amplitudes"][0] == c["seed_amplitudes"][1]:
            raise self._err("seed_amplitudes must be two distinct values", "continuation", "seed_amplitudes")
        if self.sections["control"]["harmonics"] < 1:
            raise self._err("harmonics must be >= 1", "control", "harmonics")
        if not self.sections["equilibrium"]["k"] > 0:
            raise self._err("gain k must be positive", "equilibrium", "k")
        # building every object surfaces the remaining range checks with a line number
        for section, build in (("plant", self.plant_config), ("control", self.gains),
                               ("control", self.filter_spec), ("control", self.loop_settings),
                               ("continuation", self.step_control), ("continuation", self.corrector_kw),
                               ("equilibrium", self.eq_step)):
            try:
                build()
            except (ValueError, FilterDesignError) as exc:
                raise self._err(str(exc), section) from None

    def resolved(self):
        out = {"schema_version": SCHEMA_VERSION}
        out.update(copy.deepcopy(self.sections))
        return out

    def plant_config(self):
        return PlantConfig(**self.sections["plant"])

    def gains(self):
        c = self.sections["control"]
        return PDGains(c["kp"], c["kd"])

    def filter_spec(self):
        c = self.sections["control"]
        if c["filter_cutoff_hz"] is None:
            return None
        return FilterSpec(c["filter_order"], c["filter_cutoff_hz"], self.plant_config().sample_rate)

    def loop_settings(self):
        c = self.sections["control"]
        return LoopSettings(c["max_periods"], c["stationarity_count"], c["rel_tol"], c["amplitude_floor"],
                            c["forcing_floor"], c["transient_skip_periods"], c["reference_path"])

    def step_control(self):
        c = self.sections["continuation"]
        return StepControl(h=c["h"], h_min=c["h_min"], h_max=c["h_max"], shrink=c["shrink"], grow=c["grow"],
                           max_step=c["max_step"], max_points=c["max_points"],
                           max_amplitude=c["max_amplitude"],
                           max_forcing=INF if c["max_forcing"] is None else c["max_forcing"])

    def corrector_kw(self):
        c = self.sections["continuation"]
        if not 0 < c["relax"] <= 1:
            raise ValueError("relax must lie in (0, 1]")
        if not 0 <= c["min_iter"] <= c["max_iter"]:
            raise ValueError("need 0 <= min_iter <= max_iter")
        return {"tol": c["tol"], "max_iter": c["max_iter"], "min_iter": c["min_iter"], "relax": c["relax"],
                "invasive_tol": c["invasive_tol"]}

    def newton_kw(self):
        c = self.sections["continuation"]
        return {"tol": c["tol"], "max_iter": c["max_iter"], "fd_rel": c["fd_rel"]}

    def eq_step(self):
        e = self.sections["equilibrium"]

        def lim(v, d):
            return d if v is None else v

        return EqStepControl(h=e["h"], h_min=e["h_min"], h_max=e["h_max"], max_points=e["max_points"],
                             p_bounds=(lim(e["p_min"], -INF), lim(e["p_max"], INF)),
                             x_bounds=(lim(e["x_min"], -INF), lim(e["x_max"], INF)),
                             authority_tol=e["authority_tol"])

    def frequencies_hz(self):
        s = self.sections["sweep"]
        n = int(math.floor((s["f_stop_hz"] - s["f_start_hz"]) / s["f_step_hz"] + 1e-9)) + 1
        return [round(s["f_start_hz"] + i * s["f_step_hz"], 12) for i in range(max(n, 0))]

    def make_loop(self, omega, record_traces=False):
        plant = make_plant(self.plant_config())
        return ControlLoop(plant, omega, self.gains(), self.filter_spec(), self.loop_settings(),
                           self.sections["control"]["harmonics"], record_traces=record_traces)

    @property
    def out_dir(self):
        return Path(self.sections["output"]["dir"])


class RunFailure(RuntimeError):
    pass


def cmd_equilibrium(cfg: RunConfig, args):
    e = cfg.sections["equilibrium"]
    plant_cfg = PlantConfig(model="fold", sample_rate=e["sample_rate"])
    plant = make_plant(plant_cfg, rhs=SCALAR_SYSTEMS[e["system"]])
    settle_kw = {"rate_tol": e["rate_tol"], "max_time": e["max_time"]}
    # seeds are measured: each configured (p, x) is settled on its control line
    seeds = [correct_equilibrium(plant, e["k"], EqPoint(*s), **settle_kw) for s in e["seeds"]]
    branch = track_equilibrium_branch(plant, e["k"], seeds, cfg.eq_step(), **settle_kw)
    folds = detect_folds(branch)
    out = cfg.out_dir
    write_csv(out / "equilibrium_branch.csv", ["p", "x"], ((q.p, q.x) for q in branch.points))
    write_json(out / "equilibrium.json", {
        "status": branch.status, "diagnostic": branch.diagnostic,
        "points": [[q.p, q.x] for q in branch.points],
        "folds": [{"p": f.F, "x": f.R, "index": f.index} for f in folds],
    }, cfg.resolved())
    print(f"equilibrium: {len(branch.points)} points, status {branch.status}, "
          f"{len(folds)} fold(s)" + "".join(f"; fold at p={f.F:.6g}, x={f.R:.6g}" for f in folds))
    if branch.status in ("failed", "degenerate"):
        raise RunFailure(f"equilibrium tracking stopped: {branch.diagnostic}")


def _track(cfg, loop, seeds=None):
    c = cfg.sections["continuation"]
    classify = loop.plant if c["classify"] else None
    if c["corrector"] == "pseudo_arclength":
        if seeds is None:
            seeds = seed_points(loop, c["seed_amplitudes"], **cfg.corrector_kw())
        return track_branch_arclength(loop, seeds, cfg.step_control(), **cfg.newton_kw())
    return track_branch(loop, c["seed_amplitudes"], cfg.step_control(), seeds=seeds, classify_plant=classify,
                        **cfg.corrector_kw())


def _fold_dicts(branch):
    return [{"omega": f.omega, "F": f.F, "R": f.R, "index": f.index} for f in detect_folds(branch)]


def cmd_branch(cfg: RunConfig, args):
    omega = 2.0 * math.pi * cfg.sections["sweep"]["frequency_hz"]
    loop = cfg.make_loop(omega, record_traces=args.dump_traces)
    branch = _track(cfg, loop)
    out = cfg.out_dir
    write_branch(out, "branch", branch, cfg.resolved(), {"folds": _fold_dicts(branch)})
    if args.dump_traces:
        write_traces(out / "traces.csv", loop.trace)
    print(f"branch at {loop.omega / (2 * math.pi):.6g} Hz: {len(branch)} points, status {branch.status}, "
          f"{len(detect_folds(branch))} fold(s), {branch.settle_cycles} settle cycles")
    if branch.status == "failed":
        last = branch.points[-1] if branch.points else None
        extra = f"; last good point F={last.F:.6g}, R={last.R:.6g}" if last else ""
        raise RunFailure(f"branch terminated: {branch.diagnostic}{extra}")


def cmd_surface(cfg: RunConfig, args):
    t0 = time.perf_counter()
    s = cfg.sections
    freqs = cfg.frequencies_hz()
    omegas = [2.0 * math.pi * f for f in freqs]
    c = s["continuation"]
    branches = sweep_branches(cfg.plant_config(), omegas, cfg.gains(), cfg.filter_spec(), cfg.loop_settings(),
                              s["control"]["harmonics"], cfg.step_control(), c["seed_amplitudes"],
                              cfg.corrector_kw(), classify=c["classify"], workers=s["sweep"]["workers"])
    ok = [b for b in branches if b.status != "failed" and len(b) >= 3]
    failures = [{"omega": b.omega, "diagnostic": b.diagnostic} for b in branches if b not in ok]
    if len(ok) < s["sweep"]["min_success"] * len(branches):
        raise RunFailure(f"only {len(ok)} of {len(branches)} frequencies succeeded: {failures}")
    data = SurfaceData.from_branches(ok, anchors=s["surface"]["anchors"])
    model = build_interpolant(data, rho=s["surface"]["rho"], rho_factor=s["surface"]["rho_factor"])
    folds = extract_fold_curve(data, model)
    try:
        wc, Fc, Rc = locate_cusp(folds)
        cusp = {"omega": wc, "frequency_hz": wc / (2 * math.pi), "F": Fc, "R": Rc}
    except InsufficientDataError as exc:
        cusp = None
        logger.warning("no cusp: %s", exc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        slices = constant_amplitude_slices(model, s["surface"]["levels"], ds=s["surface"]["slice_step"])
    for w in caught:
        logger.warning("%s", w.message)
    pts = [p for b in ok for p in b.points]
    e_rel = np.array([p.measures.e_rel for p in pts])
    loo = loo_rms(model)
    out = cfg.out_dir
    write_csv(out / "fig5a_surface.csv", ["omega", "frequency_hz", "F", "R", "stable"],
              ((p.omega, p.omega / (2 * math.pi), p.F, p.R, p.stable) for p in pts))
    write_csv(out / "fig5b_folds.csv", ["branch", "omega", "frequency_hz", "F", "R"],
              [(name, w, w / (2 * math.pi), F, R) for name, arr in (("lower", folds.lower), ("upper", folds.upper))
               for w, F, R in arr])
    write_csv(out / "fig5c_errors.csv", ["omega", "frequency_hz", "F", "R", "e_rms", "e_rel"],
              ((p.omega, p.omega / (2 * math.pi), p.F, p.R, p.measures.e_rms, p.measures.e_rel) for p in pts))
    total_cycles = sum(b.settle_cycles for b in branches)
    write_json(out / "surface.json", {
        "grid": {"frequencies_hz": freqs, "omegas": [b.omega for b in branches], "n_points": len(pts),
                 "succeeded": len(ok), "failures": failures},
        "interpolant": {"kernel": "wendland_c2", "rho": model.rho_, "offset": model.offset_,
                        "scale": model.scale_, "loo_rms": loo, "loo_rms_rel": loo / float(np.ptp(data.F))},
        "points": [{"omega": p.omega, "F": p.F, "R": p.R, "e_rel": p.measures.e_rel, "stable": p.stable}
                   for p in pts],
        "fold_curve": {"lower": folds.lower, "upper": folds.upper},
        "cusp": cusp,
        "slices": [{"level": sl.level, "points": sl.points} for sl in slices],
        "invasiveness": {"mean_e_rel": float(e_rel.mean()), "max_e_rel": float(e_rel.max())},
        "settle_cycles": total_cycles,
    }, cfg.resolved())
    for b in ok:
        write_branch(out / "branches", f"branch_{b.omega / (2 * math.pi):.4f}Hz", b, None,
                     {"folds": _fold_dicts(b)})
    wall = time.perf_counter() - t0
    cusp_txt = f"cusp at {cusp['frequency_hz']:.4f} Hz, F={cusp['F']:.5g}" if cusp else "no cusp"
    print(f"surface: {len(ok)}/{len(branches)} frequencies, {len(pts)} points, {cusp_txt}, "
          f"mean e_rel {e_rel.mean():.3f}%, max e_rel {e_rel.max():.3f}%")
    print(f"total wall time {wall:.1f} s, total settle cycles {total_cycles}")


def cmd_compare(cfg: RunConfig, args):
    omega = 2.0 * math.pi * cfg.sections["sweep"]["frequency_hz"]
    c = cfg.sections["continuation"]
    loop = cfg.make_loop(omega)
    seeds = seed_points(loop, c["seed_amplitudes"], **cfg.corrector_kw())
    # the Newton run starts from an exact copy of the seeded experiment
    loop_nw = copy.deepcopy(loop)
    step = cfg.step_control()
    errors = {}
    fp = track_branch(loop, step=step, seeds=seeds, **cfg.corrector_kw())
    nw = track_branch_arclength(loop_nw, seeds, copy.deepcopy(step), **cfg.newton_kw())
    for name, br in (("fixed_point", fp), ("pseudo_arclength", nw)):
        if br.status == "failed":
            errors[name] = br.diagnostic
    fp_cyc = [p.settle_cycles for p in fp.points[fp.n_seeds:]]
    nw_cyc = [p.settle_cycles for p in nw.points[nw.n_seeds:]]
    med_fp = float(np.median(fp_cyc)) if fp_cyc else math.nan
    med_nw = float(np.median(nw_cyc)) if nw_cyc else math.nan
    dist = branch_distance(fp, nw) if len(fp) and len(nw) else math.inf
    out = cfg.out_dir
    write_branch(out, "compare_fixed_point", fp, None)
    write_branch(out, "compare_pseudo_arclength", nw, None)
    write_json(out / "compare.json", {
        "omega": loop.omega,
        "seeds": [{"F": p.F, "R": p.R} for p in seeds],
        "fixed_point": {"points": len(fp) - fp.n_seeds, "settle_cycles": int(sum(fp_cyc)),
                        "median_per_point": med_fp, "status": fp.status},
        "pseudo_arclength": {"points": len(nw) - nw.n_seeds, "settle_cycles": int(sum(nw_cyc)),
                             "median_per_point": med_nw, "status": nw.status},
        "median_ratio": med_nw / med_fp if med_fp else math.nan,
        "hausdorff_rel": dist,
        "errors": errors,
    }, cfg.resolved())
    print(f"compare at {loop.omega / (2 * math.pi):.6g} Hz: fixed point {sum(fp_cyc)} cycles / {len(fp_cyc)} points, "
          f"Newton {sum(nw_cyc)} cycles / {len(nw_cyc)} points, median ratio {med_nw / med_fp:.3g}, "
          f"branch distance {100 * dist:.3g}% of range")
    if errors:
        raise RunFailure("; ".join(f"{k}: {v}" for k, v in errors.items()))


COMMANDS = {"equilibrium": cmd_equilibrium, "branch": cmd_branch, "surface": cmd_surface, "compare": cmd_compare}


def build_parser():
    ap = argparse.ArgumentParser(prog="cbc", description="Control-based continuation on simulated experiments.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--dump-traces", action="store_true", help="write per-sample traces (branch command)")
    ap.add_argument("--seed", type=int, help="noise seed (overrides plant.rng_seed)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {}
    if args.out is not None:
        overrides[("output", "dir")] = args.out
    if args.seed is not None:
        overrides[("plant", "rng_seed")] = args.seed
    try:
        cfg = RunConfig.from_file(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        COMMANDS[args.command](cfg, args)
    except (RunFailure, CorrectorFailure, SettleTimeout, PlantFault, InsufficientDataError,
            RBFConditioningError, InvalidWindowError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other fault is still a runtime failure
        logger.debug("unexpected failure", exc_info=True)
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
