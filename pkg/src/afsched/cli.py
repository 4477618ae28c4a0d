"""Command-line front end.

Subcommands: gen, solve, sweep, validate, oracle. Data goes to stdout
(or the ``-o`` file), diagnostics to stderr. Exit status is 0 on
success, 1 for infeasible or invalid input and 2 when an internal
contract is broken.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys

from .errors import ContractError, InfeasibleError, ValidationError
from .experiment import (ExperimentSpec, ThroughputRecord, instance_id, run_single, run_sweep,
                         write_csv)
from .milp import Mode
from .model import NetworkInstance, SystemParams, generate_instance, require_valid
from .rounding import PowerPolicy, RepairOrder, RoundingConfig
from .sinr import Schedule, validate_schedule
from .solver.oracle import enumerate_optimum

EXIT_OK, EXIT_INVALID, EXIT_CONTRACT = 0, 1, 2


class UsageError(Exception):
    """Bad flag combination, reported before any work starts."""


def _int_list(text):
    try:
        out = []
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        return out
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like '2,4,6' or '0-19', got {text!r}")


def _relay_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if part == "n":
            out.append("n")
        else:
            try:
                out.append(int(part))
            except ValueError:
                raise argparse.ArgumentTypeError(f"relay policy must be 'n' or an integer: {part!r}")
    return out


def _split_list(text):
    out = []
    for part in text.split(","):
        try:
            b1, b2 = part.split(":")
            out.append((float(b1), float(b2)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"splits look like '5:5,4:6', got {text!r}")
    return out


def _demand(text):
    vals = _int_list(text)
    return vals[0] if len(vals) == 1 else tuple(vals)


def _add_param_flags(p):
    g = p.add_argument_group("system parameters")
    g.add_argument("--beta-db", type=float, default=10.0)
    g.add_argument("--beta1-db", type=float, default=5.0,
                   help="requested broadcast threshold; rescaled so the linear pair sums to beta")
    g.add_argument("--beta2-db", type=float, default=5.0)
    g.add_argument("--pmax-mw", type=float, default=300.0)
    g.add_argument("--pmin-frac", type=float, default=0.01)
    g.add_argument("--g2", type=float, default=300.0)
    g.add_argument("--p-relay-mw", type=float, default=300.0)
    g.add_argument("--sigma2-mw", type=float, default=1e-6)
    g.add_argument("--budget-frac", type=float, default=0.3)
    g.add_argument("--slots", type=int, default=8)
    g.add_argument("--demand", type=_demand, default=8, help="one value or a comma list per source")
    g.add_argument("--demand-mode", choices=("off", "at_most", "at_least"), default="at_most")
    g.add_argument("--path-loss-a", type=float, default=3.0)
    g.add_argument("--placement", choices=("per_pair", "planar"), default="per_pair")


def _params(args, split=None):
    b1, b2 = split or (args.beta1_db, args.beta2_db)
    params = SystemParams.from_split(
        beta_db=args.beta_db, beta1_db=b1, beta2_db=b2, sigma2=args.sigma2_mw,
        p_slot_max=args.pmax_mw, p_slot_min=args.pmin_frac * args.pmax_mw, g2=args.g2,
        p_relay=args.p_relay_mw, budget_fraction=args.budget_frac, T=args.slots,
        demand=args.demand, demand_mode=args.demand_mode, path_loss_a=args.path_loss_a)
    bad = params.violations()
    if bad:
        raise UsageError("; ".join(map(str, bad)))
    return params


def _add_rounding_flags(p):
    g = p.add_argument_group("heuristic")
    g.add_argument("--trials", type=int, default=32)
    g.add_argument("--rng-seed", type=int, default=0)
    g.add_argument("--power-policy", choices=[v.value for v in PowerPolicy], default="keep_lp")
    g.add_argument("--repair-order", choices=[v.value for v in RepairOrder],
                   default="worst_first")
    g.add_argument("--vertex-lp", action="store_true",
                   help="round the simplex vertex as solved instead of the relay-rich optimum")
    g.add_argument("--node-limit", type=int, default=10_000)


def _rounding(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.node_limit < 1:
        raise UsageError("--node-limit must be >= 1")
    return RoundingConfig(args.trials, args.rng_seed, args.power_policy, args.repair_order,
                          not args.vertex_lp)


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


def _write_text(path, text):
    with _open_out(path) as fh:
        fh.write(text)


def _load_instance(path):
    inst = NetworkInstance.load(path)
    require_valid(inst)
    return inst


def cmd_gen(args):
    if min(args.sources, args.relays, args.dests) < 0 or args.sources < 1 or args.dests < 1:
        raise UsageError("need --sources >= 1, --dests >= 1, --relays >= 0")
    inst = generate_instance(args.seed, args.sources, args.relays, args.dests,
                             _params(args), args.placement)
    text = inst.dumps()
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        _write_text(args.output, text)
        print(f"wrote {instance_id(inst)} to {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args):
    inst = _load_instance(args.instance)
    rec = run_single(inst, args.mode, args.solver, _rounding(args), args.node_limit)
    write_csv([rec], sys.stdout, timing=args.timing, means=False)
    if args.output:
        rec.schedule.save(inst, args.output)
    print(f"{rec.solver}: {int(rec.schedule.x.sum())} link-slots, "
          f"normalized throughput {rec.norm_throughput:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args):
    if any(isinstance(m, int) and m < 0 for m in args.relays):
        raise UsageError("relay counts must be nonnegative")
    base = _params(args)
    spec = ExperimentSpec(
        n_sources=tuple(args.sources), relays=tuple(args.relays), destinations=args.dests,
        splits=tuple(args.splits or [(args.beta1_db, args.beta2_db)]),
        seeds=tuple(args.seeds), modes=tuple(args.modes), solver=args.solver,
        trials=args.trials, rng_seed=args.rng_seed, power_policy=args.power_policy,
        repair_order=args.repair_order, relay_face=not args.vertex_lp,
        node_limit=args.node_limit, base=base, placement=args.placement)
    _rounding(args)
    records = run_sweep(spec)
    with _open_out(args.output) as fh:
        write_csv(records, fh, timing=args.timing, means=not args.no_means)
    print(f"{len(records)} records", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args):
    inst = _load_instance(args.instance)
    sched = Schedule.load(inst, args.schedule)
    bad = validate_schedule(inst, sched)
    for v in bad:
        print(v)
    if bad:
        print(f"{len(bad)} violation(s)", file=sys.stderr)
        return EXIT_INVALID
    print("schedule is valid", file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args):
    inst = _load_instance(args.instance)
    if inst.n_binaries(args.mode) > args.max_binaries:
        raise UsageError(f"instance has {inst.n_binaries(args.mode)} binaries; enumeration "
                         f"is capped at --max-binaries {args.max_binaries}")
    res = enumerate_optimum(inst, args.mode)
    if res is None:
        print("no feasible schedule", file=sys.stderr)
        return EXIT_INVALID
    bad = validate_schedule(inst, res.schedule)
    if bad:
        raise ContractError("oracle schedule failed validation: " + "; ".join(map(str, bad)))
    pr = inst.params
    rec = ThroughputRecord(
        instance_id=instance_id(inst), mode=args.mode, n=inst.n_sources,
        m=inst.n_relays if Mode(args.mode) is Mode.CLS else 0, t_slots=pr.T,
        b=pr.demand if isinstance(pr.demand, int) else max(pr.demand),
        beta1_db=pr.beta1_db, beta2_db=pr.beta2_db, solver="oracle",
        objective=res.objective, norm_throughput=res.schedule.normalized_throughput(inst.n_sources),
        runtime_ms=None, seed=inst.seed)
    write_csv([rec], sys.stdout, timing=False, means=False)
    if args.output:
        res.schedule.save(inst, args.output)
    print(f"enumerated {res.checked} assignment(s)", file=sys.stderr)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="afsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sources", type=int, required=True)
    p.add_argument("--relays", type=int, required=True)
    p.add_argument("--dests", type=int, required=True)
    p.add_argument("-o", "--output")
    _add_param_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one instance and emit its record")
    p.add_argument("--instance", required=True)
    p.add_argument("--mode", choices=("cls", "dls"), default="cls")
    p.add_argument("--solver", choices=("auto", "exact", "lp-round"), default="auto")
    p.add_argument("--timing", action="store_true", help="fill in runtime_ms")
    p.add_argument("-o", "--output", help="schedule file")
    _add_rounding_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a CLS/DLS sweep and write CSV")
    p.add_argument("--sources", type=_int_list, default=[2, 4, 6, 8])
    p.add_argument("--relays", type=_relay_list, default=["n"],
                   help="comma list of relay counts or 'n' (as many as sources)")
    p.add_argument("--dests", default="n")
    p.add_argument("--splits", type=_split_list, help="e.g. '5:5,4:6'; default is the beta1/beta2 flags")
    p.add_argument("--seeds", type=_int_list, default=list(range(20)))
    p.add_argument("--modes", type=lambda s: s.split(","), default=["cls", "dls"])
    p.add_argument("--solver", choices=("auto", "exact", "lp-round"), default="auto")
    p.add_argument("--timing", action="store_true")
    p.add_argument("--no-means", action="store_true")
    p.add_argument("-o", "--output")
    _add_param_flags(p)
    _add_rounding_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a schedule against an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--schedule", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="exact optimum by exhaustive enumeration (tiny instances)")
    p.add_argument("--instance", required=True)
    p.add_argument("--mode", choices=("cls", "dls"), default="cls")
    p.add_argument("--max-binaries", type=int, default=16)
    p.add_argument("-o", "--output", help="schedule file")
    p.set_defaults(func=cmd_oracle)
    return parser


def _check_sweep_args(args):
    if args.command != "sweep":
        return
    if args.dests != "n":
        try:
            args.dests = int(args.dests)
        except ValueError:
            raise UsageError("--dests must be 'n' or an integer")
    bad = [m for m in args.modes if m not in ("cls", "dls")]
    if bad:
        raise UsageError(f"unknown mode(s): {', '.join(bad)}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        _check_sweep_args(args)
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ContractError as exc:
        print(f"error: internal contract violated: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (UsageError, ValidationError, ValueError, KeyError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
