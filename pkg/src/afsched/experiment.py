"""CLS vs DLS comparisons, sweeps and buffer-driven multi-period runs."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .errors import ContractError, InfeasibleError
from .milp import Mode, build_model
from .model import DemandMode, NetworkInstance, SystemParams, generate_instance, subset_relays
from .rounding import PowerPolicy, RepairOrder, RoundingConfig, round_best_of_k
from .sinr import Schedule, validate_schedule
from .solver.bnb import extract_schedule, solve_milp
from .solver.simplex import solve_lp

EXACT_MAX_BINARIES = 24
CSV_HEADER = ("instance_id", "mode", "n", "m", "t_slots", "b", "beta1_db", "beta2_db",
              "solver", "objective", "norm_throughput", "runtime_ms", "seed")


@dataclass
class ThroughputRecord:
    instance_id: str
    mode: str
    n: int
    m: int
    t_slots: int
    b: int
    beta1_db: float
    beta2_db: float
    solver: str
    objective: float
    norm_throughput: float
    runtime_ms: float | None
    seed: int | str
    schedule: Schedule | None = field(default=None, repr=False, compare=False)

    def row(self, timing=True):
        values = [getattr(self, name) for name in CSV_HEADER]
        if not timing:
            values[CSV_HEADER.index("runtime_ms")] = ""
        return values


def instance_id(inst: NetworkInstance):
    pr = inst.params
    b = pr.demand if isinstance(pr.demand, int) else max(pr.demand)
    return (f"n{inst.n_sources}-m{inst.n_relays}-d{inst.n_destinations}"
            f"-t{pr.T}-b{b}-s{inst.seed}")


def pick_solver(inst, mode, solver_choice):
    if solver_choice == "auto":
        return "exact" if inst.n_binaries(mode) <= EXACT_MAX_BINARIES else "lp-round"
    if solver_choice not in ("exact", "lp-round"):
        raise ValueError(f"unknown solver {solver_choice!r}")
    return solver_choice


def solve_schedule(inst: NetworkInstance, mode="cls", solver="auto", rounding=RoundingConfig(),
                   node_limit=10_000):
    """Solve one instance; returns (schedule, solver label)."""
    mode = Mode(mode)
    solver = pick_solver(inst, mode.value, solver)
    if solver == "exact":
        model = build_model(inst, mode)
        sol = solve_milp(model, node_limit=node_limit)
        if sol.status == "infeasible":
            raise InfeasibleError("no schedule meets the demand constraints")
        if sol.values is None:
            raise ContractError(f"exact solve ended with status {sol.status}")
        label = "exact" if sol.status == "optimal" else "exact-node-limit"
        return extract_schedule(inst, model, sol.values), label
    model = build_model(inst, mode, relax=True)
    lp = solve_lp(model)
    if lp.status == "infeasible":
        raise InfeasibleError("the LP relaxation is infeasible")
    return round_best_of_k(inst, model, lp, rounding), "lp-round"


def run_single(inst: NetworkInstance, mode="cls", solver_choice="auto",
               rounding=RoundingConfig(), node_limit=10_000, split_label=None) -> ThroughputRecord:
    """Solve, validate and summarize one instance.

    A schedule that fails validation means a solver bug and raises.
    ``split_label`` is echoed in the record instead of the normalized
    thresholds when given.
    """
    start = time.perf_counter()
    sched, label = solve_schedule(inst, mode, solver_choice, rounding, node_limit)
    elapsed = (time.perf_counter() - start) * 1e3
    bad = validate_schedule(inst, sched)
    if bad:
        raise ContractError(f"{label} produced an invalid schedule: " + "; ".join(map(str, bad[:5])))
    pr = inst.params
    b1, b2 = split_label or (pr.beta1_db, pr.beta2_db)
    return ThroughputRecord(
        instance_id=instance_id(inst), mode=Mode(mode).value, n=inst.n_sources,
        m=inst.n_relays if Mode(mode) is Mode.CLS else 0, t_slots=pr.T,
        b=pr.demand if isinstance(pr.demand, int) else max(pr.demand),
        beta1_db=b1, beta2_db=b2, solver=label, objective=sched.objective(),
        norm_throughput=sched.normalized_throughput(inst.n_sources),
        runtime_ms=elapsed, seed=inst.seed, schedule=sched)


@dataclass(frozen=True)
class ExperimentSpec:
    """A grid of configurations. ``relays`` entries are either an integer
    relay count or the string "n" (as many relays as sources);
    ``destinations`` likewise ("n" or an integer)."""

    n_sources: Sequence[int] = (2, 4, 6, 8)
    relays: Sequence[int | str] = ("n",)
    destinations: int | str = "n"
    splits: Sequence[tuple[float, float]] = ((5.0, 5.0),)
    seeds: Sequence[int] = tuple(range(20))
    modes: Sequence[str] = ("cls", "dls")
    solver: str = "auto"
    trials: int = 32
    rng_seed: int = 0
    power_policy: str = "keep_lp"
    repair_order: str = "worst_first"
    relay_face: bool = True
    node_limit: int = 10_000
    base: SystemParams = SystemParams()
    placement: str = "per_pair"

    def rounding(self):
        return RoundingConfig(self.trials, self.rng_seed, PowerPolicy(self.power_policy),
                              RepairOrder(self.repair_order), self.relay_face)

    def resolve_m(self, policy, n):
        return n if policy == "n" else int(policy)

    def resolve_d(self, n):
        return n if self.destinations == "n" else int(self.destinations)

    def params_for(self, split):
        b1, b2 = split
        return SystemParams.from_split(
            beta_db=self.base.beta_db, beta1_db=b1, beta2_db=b2,
            **{f.name: getattr(self.base, f.name) for f in fields(SystemParams)
               if f.name not in ("beta_db", "beta1_db", "beta2_db")})


def run_sweep(spec: ExperimentSpec) -> list[ThroughputRecord]:
    """One record per (n, relay policy, split, seed, mode), in that nesting
    order. DLS ignores relays, so its result is computed once per
    (n, split, seed) and repeated for every relay policy."""
    out = []
    rounding = spec.rounding()
    dls_done = {}
    for n in spec.n_sources:
        for policy in spec.relays:
            m = spec.resolve_m(policy, n)
            for split in spec.splits:
                params = spec.params_for(split)
                for seed in spec.seeds:
                    inst = generate_instance(seed, n, m, spec.resolve_d(n), params, spec.placement)
                    for mode in spec.modes:
                        key = (n, split, seed)
                        if Mode(mode) is Mode.DLS and key in dls_done:
                            out.append(replace(dls_done[key], instance_id=instance_id(inst)))
                            continue
                        rec = run_single(inst, mode, spec.solver, rounding, spec.node_limit,
                                         split_label=split)
                        if Mode(mode) is Mode.DLS:
                            dls_done[key] = rec
                        out.append(rec)
    return out


def mean_records(records: Sequence[ThroughputRecord]) -> list[ThroughputRecord]:
    """Average over seeds, one row per remaining configuration."""
    groups = {}
    for rec in records:
        key = (rec.mode, rec.n, rec.m, rec.t_slots, rec.b, rec.beta1_db, rec.beta2_db, rec.solver)
        groups.setdefault(key, []).append(rec)
    out = []
    for key, recs in groups.items():
        times = [r.runtime_ms for r in recs if r.runtime_ms is not None]
        out.append(replace(
            recs[0], instance_id=f"mean-n{key[1]}-m{key[2]}", seed="mean",
            objective=float(np.mean([r.objective for r in recs])),
            norm_throughput=float(np.mean([r.norm_throughput for r in recs])),
            runtime_ms=float(np.mean(times)) if times else None, schedule=None))
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_csv(records, stream, timing=False, means=True):
    """Per-seed rows, then mean rows. Timing is blank unless requested so
    that repeated runs produce identical bytes."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    rows = list(records) + (mean_records(records) if means else [])
    for rec in rows:
        w.writerow([_fmt(v) for v in rec.row(timing)])


def records_to_csv(records, timing=False, means=True):
    buf = io.StringIO()
    write_csv(records, buf, timing, means)
    return buf.getvalue()


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


# -- buffer-driven demand -------------------------------------------------

@dataclass
class BufferState:
    buffered: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        self.buffered = np.asarray(self.buffered, dtype=int)
        self.capacity = np.asarray(self.capacity, dtype=int)
        if np.any(self.capacity <= 0):
            raise ValueError("buffer capacity must be positive")
        if np.any(self.buffered < 0) or np.any(self.buffered > self.capacity):
            raise ValueError("need 0 <= buffered <= capacity")


def buffer_demand(state: BufferState, T) -> np.ndarray:
    """Slots owed to each source: floor(buffered / capacity * T)."""
    return (state.buffered * int(T)) // state.capacity


@dataclass
class PeriodRecord:
    period: int
    demand: np.ndarray
    scheduled: np.ndarray
    drained: np.ndarray
    arrivals: np.ndarray
    dropped: np.ndarray
    buffered_end: np.ndarray
    norm_throughput: float


def run_periods(inst: NetworkInstance, periods, arrival_rate, state: BufferState,
                mode="cls", solver_choice="auto", rounding=RoundingConfig(), seed=0):
    """Re-solve the same topology once per period with demand set from the
    buffers (at-most mode), drain what was scheduled, then add Poisson
    arrivals (``arrival_rate`` packets per slot per source) up to capacity."""
    if arrival_rate < 0:
        raise ValueError("arrival_rate must be nonnegative")
    T = inst.T
    buffered = state.buffered.copy()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB0F]))
    out = []
    for k in range(periods):
        demand = buffer_demand(BufferState(buffered, state.capacity), T)
        params = replace(inst.params, demand=tuple(int(b) for b in demand),
                         demand_mode=DemandMode.AT_MOST)
        cur = inst.with_params(params)
        if demand.sum() == 0:
            sched = Schedule.empty(cur)
        else:
            rec = run_single(cur, mode, solver_choice, rounding)
            sched = rec.schedule
        scheduled = np.zeros(inst.n_sources, dtype=int)
        for l, (i, _) in enumerate(inst.links):
            scheduled[i] += int(sched.x[:, l].sum())
        drained = np.minimum(scheduled, buffered)
        buffered = buffered - drained
        arrivals = rng.poisson(arrival_rate * T, size=inst.n_sources)
        room = state.capacity - buffered
        accepted = np.minimum(arrivals, room)
        buffered = buffered + accepted
        out.append(PeriodRecord(k, demand, scheduled, drained, accepted, arrivals - accepted,
                                buffered.copy(), sched.normalized_throughput(inst.n_sources)))
    return out


def relay_family(inst: NetworkInstance):
    """Nested instances with 0..M relays drawn from one instance."""
    return [subset_relays(inst, m) for m in range(inst.n_relays + 1)]
