"""Command-line entry point: ``gridrep <command> --spec study.json [options]``.

Every command writes its CSV/JSON outputs plus ``manifest.json`` to ``--out``.
Exit status is 0 on success, 1 for unusable inputs and 2 when some hours
failed but the rest were written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .allocation import AllocationError
from .casefile import CaseError, read_case, serialize_case
from .dcopf import OpfError
from .dcpf import PowerFlowError, error_summary
from .model import bus_vector
from .paramfit import FitError
from .pipeline import Study, StudyError
from .profiles import ProfileError
from .reduction import (
    ReductionError,
    ReductionPlan,
    equivalence_error,
    provenance_sidecar,
    reduce_with_plan,
)
from .validation import LmpRun, ValidationError, compare_lmps, scenario_rescale, write_report

log = logging.getLogger("gridrep")

INPUT_ERRORS = (StudyError, ProfileError, CaseError, FitError, AllocationError, ReductionError,
                ValidationError, PowerFlowError, OSError, KeyError, json.JSONDecodeError)
COMMANDS = ("ingest", "fit", "allocate", "reduce", "pf", "opf", "validate")


class InputError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _hours(text: str | None, n: int) -> list[int]:
    if text is None:
        return list(range(n))
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise InputError(f"--hours expects A:B with integer bounds, got {text!r}") from None
    if not 0 <= a <= b < n:
        raise InputError(f"--hours {text} outside the available range 0:{n - 1}")
    return list(range(a, b + 1))


class Run:
    """Output directory plus the manifest accumulated while a command runs."""

    def __init__(self, args, inputs):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs = sorted({Path(p).resolve() for p in inputs})
        self.written: list[Path] = []
        self.extra: dict = {}

    def csv(self, frame: pd.DataFrame, name: str, **kw) -> Path:
        p = self.out / name
        frame.to_csv(p, float_format="%.10g", **kw)
        self.written.append(p)
        return p

    def json(self, data, name: str) -> Path:
        p = self.out / name
        p.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.written.append(p)
        return p

    def manifest(self, status: int) -> None:
        a = self.args
        data = {
            "command": a.command,
            "argv": [a.command] + [f"--{k}={v}" for k, v in sorted(vars(a).items())
                                   if k not in ("command", "func", "log_level") and v is not None],
            "seed": a.seed,
            "scale": a.scale,
            "hours": a.hours,
            "jobs": a.jobs,
            "exit_status": status,
            "inputs": {str(p): _sha256(p) for p in self.inputs},
            "outputs": {p.name: _sha256(p) for p in sorted(set(self.written))},
            "versions": {"gridrep": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "pandas": pd.__version__},
            **self.extra,
        }
        (self.out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (pd.Timestamp,)):
        return v.isoformat()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _clean(x: float):
    return None if isinstance(x, float) and math.isnan(x) else x


def _study(args) -> Study:
    if not args.spec:
        raise InputError("--spec (study config) is required")
    study = Study.from_file(args.spec, case=args.case, profiles=args.profiles)
    if args.seed is not None:
        study.seed = args.seed
    else:
        args.seed = study.seed
    return study


def _stamp_index(study: Study, hours) -> pd.Index:
    return pd.Index([study.index[t].isoformat() for t in hours], name="timestamp")


# ------------------------------------------------------------------ commands

def cmd_ingest(args) -> int:
    """Parse and check every input; write normalized hourly tables."""
    study = _study(args)
    run = Run(args, study.input_files())
    data = study.ingest()
    hours = _hours(args.hours, len(study.index))
    for key in ("load", "fuel_mix", "ties", "fuel_prices", "lmp", "flows", "interface_limits"):
        if key in data:
            frame = getattr(data[key], "frame", data[key]).reindex(study.index).iloc[hours].copy()
            frame.index = _stamp_index(study, hours)
            run.csv(frame, f"{key}_hourly.csv")
    summary = {
        "hours": len(study.index), "first": study.index[0].isoformat(), "last": study.index[-1].isoformat(),
        "zones": list(study.load.columns), "units_with_records": sorted(study.unit_records),
        "network": {"buses": study.full_net.n_bus, "branches": len(study.full_net.branches),
                    "generators": len(study.full_net.generators), "interfaces": len(study.interfaces)},
    }
    run.json(summary, "ingest_summary.json")
    run.manifest(0)
    print(f"ingested {summary['hours']} hours, {summary['network']['buses']} buses")
    return 0


def cmd_fit(args) -> int:
    """Fit thermal unit limits, ramps and heat rates from hourly records."""
    study = _study(args)
    run = Run(args, study.input_files())
    rows = []
    for gid, p in study.unit_parameters.items():
        fit = p.heat_rate
        if fit.poor_fit:
            log.warning("unit %s: heat-rate fit R^2 = %.3f below 0.9", gid, fit.r_squared)
        rows.append({"unit": gid, "source": p.source, "p_max": p.p_max, "p_min": p.p_min,
                     "ramp_hourly": p.ramp_hourly, "heat_rate_slope": fit.slope,
                     "heat_rate_intercept": fit.intercept, "r_squared": fit.r_squared,
                     "n_points": fit.n_points, "poor_fit": fit.poor_fit})
    run.csv(pd.DataFrame(rows).set_index("unit"), "unit_parameters.csv")
    costs = pd.DataFrame({"unit": list(study.drawn_costs), "c1": list(study.drawn_costs.values())}).set_index("unit")
    run.csv(costs, "drawn_marginal_costs.csv")
    run.manifest(0)
    print(f"fitted {len(rows)} thermal units ({sum(r['poor_fit'] for r in rows)} flagged poor fit)")
    return 0


def cmd_allocate(args) -> int:
    """Disaggregate fleet totals and zonal loads to units and buses."""
    study = _study(args)
    run = Run(args, study.input_files())
    hours = _hours(args.hours, len(study.index))
    a = study.allocated
    outputs = a.outputs.iloc[hours].copy()
    outputs.index = _stamp_index(study, hours)
    loads = a.bus_loads.iloc[hours].copy()
    loads.index = _stamp_index(study, hours)
    run.csv(outputs, "unit_outputs.csv")
    run.csv(loads, "bus_loads.csv")
    clamps = pd.DataFrame([{"timestamp": c.timestamp.isoformat(), "unit": c.unit, "raw": c.raw, "value": c.value}
                           for c in a.clamps], columns=["timestamp", "unit", "raw", "value"])
    run.csv(clamps, "clamps.csv", index=False)
    run.json({"notes": a.notes, "n_clamps": len(a.clamps)}, "allocation_notes.json")
    run.manifest(0)
    print(f"allocated {len(hours)} hours, {len(a.clamps)} clamp(s), {len(a.notes)} note(s)")
    return 0


def _case_baseline(net) -> np.ndarray:
    """Generation at capacity scaled to the total base load, minus base load."""
    load = net.base_loads()
    cap = sum(g.p_max for g in net.generators if math.isfinite(g.p_max))
    gen = {}
    if cap > 0:
        k = load.sum() / cap
        for g in net.generators:
            gen[net.bus_index[g.bus]] = gen.get(net.bus_index[g.bus], 0.0) + k * g.p_max
    inj = -load.copy()
    for i, v in gen.items():
        inj[i] += v
    return inj


def cmd_reduce(args) -> int:
    """Ward-reduce the case and check flow equivalence on baseline injections."""
    if not args.spec:
        raise InputError("--spec (study config or reduction spec) is required")
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        raise InputError(f"input file not found: {spec_path}")
    data = json.loads(spec_path.read_text(encoding="utf-8"))
    if "retained" in data:
        if not args.case:
            raise InputError("--case is required with a bare reduction spec")
        case = Path(args.case)
        if not case.is_file():
            raise InputError(f"input file not found: {case}")
        net, ifaces = read_case(case)
        plan = ReductionPlan.from_dict(data)
        inputs = [case, spec_path]
        base = _case_baseline(net)
        if args.seed is None:
            args.seed = 0
    else:
        study = _study(args)
        if study.plan is None:
            raise InputError("study config has no 'reduction' entry")
        net, ifaces, plan = study.full_net, study.interfaces, study.plan
        inputs = study.input_files()
        base = study.baseline_injections()
    run = Run(args, inputs)
    red, final = reduce_with_plan(net, base, plan)
    prepared = plan.prepare(net)
    err = equivalence_error(prepared, bus_vector(net, base), red)
    kept = [i for i in ifaces if all(b in final.branch_index for b, _ in i.members)]
    p = run.out / "reduced_case.txt"
    p.write_text(serialize_case(final, kept, header=f"reduced from {Path(args.case or 'study case').name}"))
    run.written.append(p)
    run.json(provenance_sidecar(red), "provenance.json")
    run.json(err, "equivalence.json")
    run.extra["equivalence"] = err
    run.manifest(0)
    print(f"reduced {net.n_bus} -> {final.n_bus} buses, {len(final.branches)} branches")
    print(f"equivalence check: max flow error {err['max_flow_error_pu']:.3e} pu, "
          f"max angle error {err['max_angle_error_rad']:.3e} rad")
    return 0


def _pf_outputs(study: Study, run: Run, hours) -> tuple[int, dict]:
    rows, sols, failures = study.run_pf(hours)
    idx = _stamp_index(study, sorted(sols))
    net = study.study_net
    flows = pd.DataFrame([sols[t].branch_flows for t in sorted(sols)], index=idx,
                         columns=[f"branch_{b}" for b in (br.id for br in net.branches)])
    angles = pd.DataFrame([sols[t].angles for t in sorted(sols)], index=idx,
                          columns=[f"bus_{b}" for b in net.bus_ids])
    run.csv(flows, "branch_flows.csv")
    run.csv(angles, "bus_angles.csv")
    run.csv(rows, "interface_flows.csv", index=False)
    wide = rows.pivot(index="timestamp", columns="interface", values="epsilon").sort_index()
    run.csv(wide, "interface_errors.csv")
    summary = {}
    if rows["epsilon"].notna().any():
        summary = {k: {kk: _clean(vv) for kk, vv in v.as_dict().items()} for k, v in error_summary(wide).items()}
    run.json(summary, "error_summary.json")
    run.csv(pd.DataFrame(failures, columns=["hour", "error"]), "pf_failures.csv", index=False)
    return (2 if failures else 0), summary


def cmd_pf(args) -> int:
    """Hourly DC power flow and interface error statistics."""
    study = _study(args)
    run = Run(args, study.input_files())
    hours = _hours(args.hours, len(study.index))
    status, summary = _pf_outputs(study, run, hours)
    run.manifest(status)
    print(f"power flow: {len(hours)} hours, exit {status}")
    for name, s in summary.items():
        print(f"  {name}: median {s['median']:+.4f}, IQR [{s['q1']:+.4f}, {s['q3']:+.4f}], "
              f"95% [{s['p2_5']:+.4f}, {s['p97_5']:+.4f}]")
    return status


def _opf_outputs(study: Study, run: Run, hours, scale: float, jobs: int):
    res = study.run_opf(hours, scale=scale, jobs=jobs)
    done = sorted(res.solutions)
    idx = _stamp_index(study, done)
    zonal = pd.DataFrame([res.solutions[t].zonal_lmp for t in done], index=idx)
    net = study.opf_network
    nodal = pd.DataFrame([res.solutions[t].nodal_lmp for t in done], index=idx,
                         columns=[f"bus_{b}" for b in net.bus_ids])
    dispatch = pd.DataFrame([res.solutions[t].dispatch for t in done], index=idx)
    run.csv(zonal, "zonal_lmp.csv")
    run.csv(nodal, "nodal_lmp.csv")
    run.csv(dispatch, "dispatch.csv")
    binding = pd.DataFrame([{"timestamp": idx[k], "constraint": c} for k, t in enumerate(done)
                            for c in res.solutions[t].binding], columns=["timestamp", "constraint"])
    run.csv(binding, "binding.csv", index=False)
    run.csv(pd.DataFrame([(t, study.index[t].isoformat(), e) for t, e in res.failures],
                         columns=["hour", "timestamp", "error"]), "opf_failures.csv", index=False)
    run.extra["infeasible_hours"] = [t for t, _ in res.failures]
    run.extra["degenerate_hours"] = [t for t in done if res.solutions[t].degenerate]
    return res, zonal


def cmd_opf(args) -> int:
    """Hourly DC-OPF with nodal and zonal prices."""
    study = _study(args)
    run = Run(args, study.input_files())
    hours = _hours(args.hours, len(study.index))
    res, _ = _opf_outputs(study, run, hours, args.scale, args.jobs)
    status = 2 if res.failures else 0
    run.manifest(status)
    print(f"opf: {len(res.solutions)} of {len(hours)} hours solved, scale {args.scale:g}, exit {status}")
    return status


def cmd_validate(args) -> int:
    """Compare simulated with recorded prices, plus cost-scale scenarios."""
    study = _study(args)
    if study.lmp is None:
        raise InputError("study config has no 'lmp' reference profile")
    run = Run(args, study.input_files())
    hours = _hours(args.hours, len(study.index))
    settings = study.validation_settings
    pf_status, pf_summary = _pf_outputs(study, run, hours) if study.flows is not None else (0, {})
    res, zonal = _opf_outputs(study, run, hours, args.scale, args.jobs)
    zonal.index = pd.DatetimeIndex(zonal.index)
    report = compare_lmps(study.lmp.frame, zonal, settings["rules"], settings["band"],
                          settings["seasons"], settings["outlier_zones"])
    scen_hours = settings["scenario_hours"]
    scen_hours = [t for t in (hours if scen_hours is None else scen_hours) if t in res.solutions]
    if settings["scenarios"] and scen_hours:
        lmp_run = LmpRun(lambda t: study.opf_problem(t, args.scale), res.solutions,
                         study.lmp.frame.reset_index(drop=True))
        for k in settings["scenarios"]:
            try:
                sc = scenario_rescale(lmp_run, k, scen_hours)
            except OpfError as exc:
                report.skipped.append(f"scenario x{k:g}: {exc}")
                continue
            sc.zonal_lmp.index = _stamp_index(study, sc.zonal_lmp.index)
            report.scenarios[k] = sc
    run.written += write_report(report, run.out, zonal, study.lmp.frame)
    status = 2 if (res.failures or pf_status) else 0
    run.extra["interface_errors"] = pf_summary
    run.manifest(status)
    for (season, zone), r in sorted(report.correlations.items()):
        print(f"  {season}/{zone}: pearson {r:.4f}")
    print(f"validate: {len(report.removed)} point(s) filtered, {len(report.outliers)} outlier(s), exit {status}")
    return status


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridrep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=globals()[f"cmd_{name}"].__doc__)
        p.add_argument("--spec", help="study config JSON (reduce also accepts a bare reduction spec)")
        p.add_argument("--case", help="case file, overriding the one named in the study config")
        p.add_argument("--profiles", help="directory holding the profile files named in the study config")
        p.add_argument("--hours", metavar="A:B", help="inclusive range of hour indices to process")
        p.add_argument("--scale", type=float, default=1.0, help="multiplier on every marginal cost")
        p.add_argument("--seed", type=int, help="seed for the marginal-cost draws (overrides the config)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel hourly solves")
        p.add_argument("--out", default=f"gridrep-out/{name}", help="output directory")
        p.add_argument("--log-level", default="WARNING")
        p.set_defaults(func=globals()[f"cmd_{name}"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s: %(message)s", force=True)
    if not args.scale > 0:
        print("error: --scale must be positive", file=sys.stderr)
        return 1
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (InputError, *INPUT_ERRORS) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except OpfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
