"""MILP formulation of cooperative link scheduling.

The cooperative SINR requirement is split into a direct-phase row and a
relay-phase row whose thresholds add up to the full decoding threshold,
which keeps every constraint linear in the powers. Rows are switched off
by a big constant when their activation variable is zero.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .model import DemandMode, NetworkInstance, require_valid, subset_relays

LE, GE, EQ = "<=", ">=", "="


class VarKey(NamedTuple):
    kind: str  # "x", "y" or "P"
    i: int
    j: int | None
    r: int | None
    t: int


class Mode(str, enum.Enum):
    CLS = "cls"
    DLS = "dls"


@dataclass(frozen=True)
class BuildOptions:
    mode: Mode = Mode.CLS
    relax: bool = False
    demand_mode: DemandMode | None = None  # None: take it from the instance

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.demand_mode is not None:
            object.__setattr__(self, "demand_mode", DemandMode(self.demand_mode))


@dataclass(eq=False)
class MilpModel:
    """A maximization problem  max c.z  s.t.  row_lo <= A z <= row_hi,
    lb <= z <= ub, with some z integral.

    ``keys`` maps column -> VarKey and ``index`` is its inverse. ``tags``
    holds the constraint family of each row.
    """

    names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    integral: np.ndarray
    A: sp.csr_matrix
    senses: list[str]
    rhs: np.ndarray
    tags: list[str]
    c: np.ndarray
    keys: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    delta: float = 0.0

    @property
    def n_vars(self):
        return len(self.lb)

    @property
    def n_rows(self):
        return len(self.rhs)

    def row_bounds(self):
        lo = np.where([s in (GE, EQ) for s in self.senses], self.rhs, -np.inf)
        hi = np.where([s in (LE, EQ) for s in self.senses], self.rhs, np.inf)
        return lo.astype(float), hi.astype(float)

    def row_counts(self):
        counts = defaultdict(int)
        for tag in self.tags:
            counts[tag] += 1
        return dict(counts)

    def relaxed(self):
        return MilpModel(self.names, self.lb, self.ub, np.zeros_like(self.integral),
                         self.A, self.senses, self.rhs, self.tags, self.c,
                         self.keys, self.index, self.delta)

    def violations(self, z, tol=1e-7):
        """Rows and bounds broken by ``z`` (relative to row magnitude)."""
        z = np.asarray(z, dtype=float)
        act = self.A @ z
        scale = np.maximum(1.0, abs(self.A) @ np.abs(z) + np.abs(self.rhs))
        out = []
        for r, (s, b) in enumerate(zip(self.senses, self.rhs)):
            err = {LE: act[r] - b, GE: b - act[r], EQ: abs(act[r] - b)}[s]
            if err > tol * scale[r]:
                out.append((r, self.tags[r], float(err)))
        bad = np.flatnonzero((z < self.lb - tol) | (z > self.ub + tol))
        out.extend((-1, f"bound:{self.names[v]}", float(z[v])) for v in bad)
        return out

    def objective_value(self, z):
        return float(self.c @ np.asarray(z, dtype=float))

    def to_lp_format(self):
        """Serialize in CPLEX LP text format for cross-checking elsewhere."""
        def terms(coefs):
            parts = []
            for col, val in coefs:
                sign = "-" if val < 0 else "+"
                parts.append(f"{sign} {float(abs(val))!r} {self.names[col]}")
            return " ".join(parts) if parts else "0 " + self.names[0]

        lines = ["\\ afsched cooperative link scheduling", "Maximize",
                 " obj: " + terms((j, v) for j, v in enumerate(self.c) if v != 0),
                 "Subject To"]
        A = self.A.tocsr()
        for r in range(self.n_rows):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            coefs = zip(A.indices[lo:hi], A.data[lo:hi])
            op = {LE: "<=", GE: ">=", EQ: "="}[self.senses[r]]
            lines.append(f" {self.tags[r].replace(chr(39), 'p')}_{r}: {terms(coefs)} {op} {float(self.rhs[r])!r}")
        lines.append("Bounds")
        for j, name in enumerate(self.names):
            lines.append(f" {float(self.lb[j])!r} <= {name} <= {float(self.ub[j])!r}")
        ints = [n for n, f in zip(self.names, self.integral) if f]
        if ints:
            lines.append("General")
            lines.extend(" " + n for n in ints)
        lines.append("End")
        return "\n".join(lines) + "\n"


class ModelBuilder:
    """Accumulates variables and sparse rows, then freezes a MilpModel."""

    def __init__(self):
        self.names, self.lb, self.ub, self.integral, self.keys = [], [], [], [], []
        self.index = {}
        self.rows, self.cols, self.vals = [], [], []
        self.senses, self.rhs, self.tags = [], [], []
        self.obj = {}

    def add_var(self, name, lower, upper, integral=False, key=None):
        col = len(self.names)
        self.names.append(name)
        self.lb.append(float(lower))
        self.ub.append(float(upper))
        self.integral.append(bool(integral))
        self.keys.append(key)
        if key is not None:
            self.index[key] = col
        return col

    def add_row(self, coefs, sense, rhs, tag):
        merged = defaultdict(float)
        for col, val in coefs:
            merged[col] += val
        r = len(self.rhs)
        for col, val in merged.items():
            if val != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(val)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.tags.append(tag)
        return r

    def set_objective(self, col, coef):
        self.obj[col] = coef

    def build(self, delta=0.0):
        n = len(self.names)
        A = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n))
        c = np.zeros(n)
        for col, coef in self.obj.items():
            c[col] = coef
        return MilpModel(self.names, np.array(self.lb), np.array(self.ub),
                         np.array(self.integral, dtype=bool), A, self.senses,
                         np.array(self.rhs), self.tags, c, self.keys, self.index, delta)


def big_delta(inst: NetworkInstance) -> float:
    """Smallest single constant that deactivates every SINR row.

    Each SINR row reads ``signal + slack*Delta >= thr * bracket`` with
    signal >= 0 and thr <= beta, so Delta = beta * (largest possible
    bracket) suffices. Relay counts are bounded by the number of relay links
    through a relay, so the bound holds for any in-range activations.
    """
    pr = inst.params
    g = inst.gains
    dests = sorted({j for _, j in inst.links})
    worst = max(pr.sigma2 + pr.p_slot_max * g.sd[:, j].sum() for j in dests)
    if inst.relay_links:
        per_relay = np.zeros(inst.n_relays)
        for _, r, _ in inst.relay_links:
            per_relay[r] += 1
        for r, j in sorted({(r, j) for _, r, j in inst.relay_links}):
            fwd = pr.p_relay * sum(per_relay[q] * g.rd[q, j] for q in range(inst.n_relays) if q != r)
            at_relay = pr.sigma2 + pr.p_slot_max * g.sr[:, r].sum()
            worst = max(worst, pr.sigma2 + fwd + at_relay * g.rd[r, j] * pr.g2)
    # the factor absorbs rounding in the row sums
    return pr.beta * worst * (1.0 + 1e-9)


def build_cls_milp(inst: NetworkInstance, opts: BuildOptions = BuildOptions()) -> MilpModel:
    """Throughput-maximizing schedule model over all T slots."""
    require_valid(inst)
    if opts.mode is Mode.DLS:
        inst = subset_relays(inst, 0)
    pr = inst.params
    g = inst.gains
    T, N = pr.T, inst.n_sources
    delta = big_delta(inst)
    demand_mode = opts.demand_mode or pr.demand_mode
    B = pr.demand_vector(N)
    integral = not opts.relax
    b = ModelBuilder()

    x = {}
    for t in range(T):
        for i, j in inst.links:
            x[t, i, j] = b.add_var(f"x_{i}_{j}_{t}", 0, 1, integral, VarKey("x", i, j, None, t))
            b.set_objective(x[t, i, j], 1.0 / T)
    y = {}
    for t in range(T):
        for i, r, j in inst.relay_links:
            y[t, i, r, j] = b.add_var(f"y_{i}_{r}_{j}_{t}", 0, 1, integral, VarKey("y", i, j, r, t))
    P = {}
    for t in range(T):
        for i in range(N):
            P[t, i] = b.add_var(f"P_{i}_{t}", 0, pr.p_slot_max, False, VarKey("P", i, None, None, t))

    links_of = defaultdict(list)
    for i, j in inst.links:
        links_of[i].append(j)
    relays_of = defaultdict(list)  # (i, j) -> relays
    served_by = defaultdict(list)  # r -> (i, j)
    for i, r, j in inst.relay_links:
        relays_of[i, j].append(r)
        served_by[r].append((i, j))

    # C2: per-link demand; rows that cannot bind are omitted
    for i, j in inst.links:
        total = [(x[t, i, j], 1.0) for t in range(T)]
        if demand_mode is DemandMode.AT_MOST and B[i] < T:
            b.add_row(total, LE, B[i], "C2")
        elif demand_mode is DemandMode.AT_LEAST and B[i] > 0:
            b.add_row(total, GE, B[i], "C2")

    for t in range(T):
        for i, j in inst.links:
            interf = [(P[t, k], -g.sd[k, j]) for k in range(N) if k != i]
            signal = [(P[t, i], g.sd[i, j]), (x[t, i, j], -delta)]
            # C3a: direct phase meets beta1
            b.add_row(signal + [(c, pr.beta1 * v) for c, v in interf], GE,
                      pr.beta1 * pr.sigma2 - delta, "C3a")
            # C3b: without a relay the direct phase alone must meet beta
            relay_slack = [(y[t, i, r, j], delta) for r in relays_of[i, j]]
            b.add_row(signal + relay_slack + [(c, pr.beta * v) for c, v in interf], GE,
                      pr.beta * pr.sigma2 - delta, "C3b")

        # C4: relayed phase meets beta2
        for i, r, j in inst.relay_links:
            amp = g.rd[r, j] * pr.g2
            row = [(P[t, i], g.sr[i, r] * amp), (y[t, i, r, j], -delta)]
            for q, pairs in served_by.items():
                if q != r:
                    row += [(y[t, a, q, c], -pr.beta2 * pr.p_relay * g.rd[q, j]) for a, c in pairs]
            row += [(P[t, k], -pr.beta2 * g.sr[k, r] * amp) for k in range(N) if k != i]
            b.add_row(row, GE, pr.beta2 * (pr.sigma2 + pr.sigma2 * amp) - delta, "C4")

        # C5: one relay per source; C5': one source per relay
        for i in range(N):
            ys = [y[t, i, r, j] for j in links_of[i] for r in relays_of[i, j]]
            if ys:
                b.add_row([(v, 1.0) for v in ys], LE, 1.0, "C5")
        for r, pairs in served_by.items():
            b.add_row([(y[t, i, r, j], 1.0) for i, j in pairs], LE, 1.0, "C5'")

        # C6: a relay link needs its source link
        for i, r, j in inst.relay_links:
            b.add_row([(x[t, i, j], 1.0), (y[t, i, r, j], -1.0)], GE, 0.0, "C6")

    # C7: energy budget over the horizon
    for i in range(N):
        b.add_row([(P[t, i], 1.0) for t in range(T)], LE, pr.energy_budget, "C7")

    # C8: per-slot power window tied to the source's activation
    for t in range(T):
        for i in range(N):
            xs = [x[t, i, j] for j in links_of[i]]
            b.add_row([(P[t, i], 1.0)] + [(v, -pr.p_slot_min) for v in xs], GE, 0.0, "C8lo")
            b.add_row([(P[t, i], 1.0)] + [(v, -pr.p_slot_max) for v in xs], LE, 0.0, "C8hi")
            if len(xs) > 1:
                b.add_row([(v, 1.0) for v in xs], LE, 1.0, "C8dest")

    return b.build(delta=delta)


def build_dls_milp(inst: NetworkInstance, opts: BuildOptions = BuildOptions()) -> MilpModel:
    """Direct-only baseline: the cooperative model with every relay removed."""
    return build_cls_milp(inst, BuildOptions(Mode.DLS, opts.relax, opts.demand_mode))


def build_model(inst, mode="cls", relax=False, demand_mode=None):
    return build_cls_milp(inst, BuildOptions(Mode(mode), relax, demand_mode))


def expected_row_counts(inst: NetworkInstance, mode="cls"):
    """Closed-form row counts per constraint family."""
    if Mode(mode) is Mode.DLS:
        inst = subset_relays(inst, 0)
    pr = inst.params
    T, N, L, K = pr.T, inst.n_sources, len(inst.links), len(inst.relay_links)
    B = pr.demand_vector(N)
    if pr.demand_mode is DemandMode.AT_MOST:
        c2 = sum(1 for i, _ in inst.links if B[i] < T)
    elif pr.demand_mode is DemandMode.AT_LEAST:
        c2 = sum(1 for i, _ in inst.links if B[i] > 0)
    else:
        c2 = 0
    n_links = defaultdict(int)
    for i, _ in inst.links:
        n_links[i] += 1
    counts = {"C2": c2, "C3a": T * L, "C3b": T * L, "C4": T * K,
              "C5": T * len({i for i, _, _ in inst.relay_links}),
              "C5'": T * len({r for _, r, _ in inst.relay_links}),
              "C6": T * K, "C7": N, "C8lo": T * N, "C8hi": T * N,
              "C8dest": T * sum(1 for i in range(N) if n_links[i] > 1)}
    return {k: v for k, v in counts.items() if v}
