"""Command-line front end: ``analytic``, ``simulate``, ``sweep`` and ``validate``.

Exit codes: 0 success, 1 validation or computation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import markov as mk
from . import simulator as sm
from . import validation
from .scenario import Scenario, ScenarioError, desk_scale, load_scenario, validate_scenario

CSV_HEADER = ["var", "analytic_throughput", "analytic_outage", "sim_throughput", "sim_outage",
              "tv_distance", "mode_eh", "mode_idfail", "mode_forward", "error"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows, out=None) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow([_fmt(row.get(k)) for k in CSV_HEADER])
    text = buf.getvalue()
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _scenario(args) -> Scenario:
    scn = load_scenario(args.scenario) if args.scenario else Scenario()
    overrides = {
        ("simulation", "seed"): args.seed,
        ("simulation", "blocks"): args.blocks,
        ("simulation", "fidelity"): args.fidelity,
        ("simulation", "battery"): args.battery,
    }
    for (section, key), value in overrides.items():
        if value is not None:
            scn = scn.with_value(section, key, value)
    return validate_scenario(scn)


def _sim_label(sim: sm.SimConfig, baseline: bool) -> str:
    scheme = "baseline" if baseline else "atf"
    battery = "none" if baseline else sim.battery_mode
    return f"{scheme}:{sim.fidelity}:{battery}:seed={sim.seed}"


def _sim_columns(rep: sm.SimReport) -> dict:
    eh, fail, fwd = rep.mode_counts
    return {"sim_throughput": rep.empirical_throughput, "sim_outage": rep.empirical_outage,
            "mode_eh": eh, "mode_idfail": fail, "mode_forward": fwd}


def _emit(rows, args, summary: list[str]):
    text = write_csv(rows, args.out)
    if args.out:
        print("\n".join(summary))
    else:
        print("\n".join(summary), file=sys.stderr)
        sys.stdout.write(text)


# --- commands --------------------------------------------------------------

def cmd_analytic(args) -> int:
    scn = _scenario(args)
    cfg, b = scn.system_config(), scn.battery()
    rep = mk.analytic_pipeline(cfg, b)
    summary = [f"throughput={rep.throughput!r} bits/s/Hz", f"outage={rep.outage!r}",
               f"first_hop_outage={rep.inputs.first_hop_outage!r}", f"levels={b.levels}"]
    if args.dump:
        summary.append("pi=" + ",".join(repr(float(p)) for p in rep.pi))
        summary += ["Z[%d]=" % i + ",".join(repr(float(t)) for t in row)
                    for i, row in enumerate(rep.transition)]
    row = {"var": "analytic", "analytic_throughput": rep.throughput, "analytic_outage": rep.outage}
    _emit([row], args, summary)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = _scenario(args)
    cfg, b, sim = scn.system_config(), scn.battery(), scn.sim_config()
    if args.baseline:
        rep = sm.simulate_baseline_no_accumulation(
            cfg, sim, scn.get("simulation", "baseline_rate_compensation"))
    else:
        rep = sm.simulate_atf(cfg, b, sim)
    label = _sim_label(sim, args.baseline)
    summary = [f"scheme={label}", f"seed={sim.seed}", f"blocks={sim.num_blocks}",
               f"throughput={rep.empirical_throughput!r} (stderr {rep.throughput_stderr:.3g})",
               f"outage={rep.empirical_outage!r}", f"mode_counts={rep.mode_counts}"]
    _emit([{"var": label, **_sim_columns(rep)}], args, summary)
    return EXIT_OK


def point_seed(seed: int, index: int) -> int:
    """Independent per-point seed derived from the base seed and the grid index."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def sweep_point(scn: Scenario, variable: str, value: float, index: int, baseline: bool) -> dict:
    row = {"var": value}
    try:
        point = validate_scenario(scn.at(variable, value))
        cfg, b, sim = point.system_config(), point.battery(), point.sim_config()
        sim = sm.SimConfig(sim.num_blocks, point_seed(sim.seed, index), sim.fidelity, sim.battery_mode)
        ana = mk.analytic_pipeline(cfg, b)
        row.update(analytic_throughput=ana.throughput, analytic_outage=ana.outage)
        if baseline:
            rep = sm.simulate_baseline_no_accumulation(
                cfg, sim, point.get("simulation", "baseline_rate_compensation"))
        else:
            rep = sm.simulate_atf(cfg, b, sim)
            if rep.level_histogram is not None:
                row["tv_distance"] = sm.empirical_vs_analytic(rep.level_histogram, ana.pi).tv_distance
        row.update(_sim_columns(rep))
    except Exception as exc:  # recorded per point, the sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(args) -> int:
    scn = _scenario(args)
    if not args.full_scale:
        scn = desk_scale(scn)
    if args.var is not None:
        scn = scn.with_value("sweep", "variable", args.var)
    if args.grid is not None:
        scn = scn.with_value("sweep", "grid", args.grid)
    spec = validate_scenario(scn).sweep_spec()
    jobs = max(1, args.jobs or 1)
    tasks = [(scn, spec.variable, v, i, args.baseline) for i, v in enumerate(spec.grid)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            rows = list(pool.map(sweep_point, *zip(*tasks)))
    else:
        rows = [sweep_point(*t) for t in tasks]
    failed = sum(1 for r in rows if r.get("error"))
    summary = [f"sweep {spec.variable} over {len(rows)} points, levels={scn.get('battery', 'levels')}"
               f", {failed} failed"]
    _emit(rows, args, summary)
    return EXIT_OK


def cmd_validate(args) -> int:
    failures = 0
    for module, check in validation.all_checks(quick=args.quick):
        res = check()
        print(f"{module:<13} {res.line()}", flush=True)
        failures += not res.passed
    print(f"{failures} check(s) failed" if failures else "all checks passed")
    return EXIT_FAIL if failures else EXIT_OK


# --- parser ----------------------------------------------------------------

def _grid(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="YAML scenario file (defaults to the reference setup)")
    common.add_argument("--seed", type=int)
    common.add_argument("--blocks", type=int)
    common.add_argument("--fidelity", choices=sm.FIDELITIES)
    common.add_argument("--battery", choices=sm.BATTERY_MODES)
    common.add_argument("--baseline", action="store_true", help="simulate the three-slot scheme")
    common.add_argument("--quick", action="store_true")
    common.add_argument("--out", help="CSV output path (stdout when omitted)")

    parser = argparse.ArgumentParser(prog="atfrelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analytic", parents=[common], help="Markov-chain throughput")
    p.add_argument("--dump", action="store_true", help="also print pi and Z")
    p.set_defaults(func=cmd_analytic)
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo protocol run")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("sweep", parents=[common], help="analytic + simulated sweep to CSV")
    p.add_argument("--var", help="sweep variable (overrides the scenario)")
    p.add_argument("--grid", type=_grid, help="comma-separated grid values")
    p.add_argument("--jobs", type=int, default=os.cpu_count(), help="parallel grid points")
    p.add_argument("--full-scale", action="store_true",
                   help="keep the full battery resolution instead of the desk-scale default")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("validate", parents=[common], help="property and acceptance checks")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
