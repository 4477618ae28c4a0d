"""Exhaustive-enumeration reference solver for tiny instances.

Every admissible activation pattern is enumerated and checked for power
feasibility with an LP built directly from the per-phase SINR
requirements (solved by HiGHS through scipy, not by this package's
simplex). Slots are interchangeable in the model, so assignments are
enumerated as multisets of per-slot patterns, from most to fewest active
links; the first feasible one is optimal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ..model import DemandMode, NetworkInstance
from ..sinr import Schedule

OFF, DIRECT = -2, -1


@dataclass
class OracleResult:
    objective: float
    schedule: Schedule
    checked: int


def slot_patterns(inst: NetworkInstance, mode="cls"):
    """All per-slot link states: OFF, DIRECT or a relay index, with at most
    one link per source and one link per relay."""
    choices = []
    for i, j in inst.links:
        states = [OFF, DIRECT]
        if mode == "cls":
            states += sorted(r for (a, r, b) in inst.relay_links if (a, b) == (i, j))
        choices.append(states)
    out = []
    for pat in itertools.product(*choices):
        relays = [s for s in pat if s >= 0]
        if len(relays) != len(set(relays)):
            continue
        srcs = [inst.links[l][0] for l, s in enumerate(pat) if s != OFF]
        if len(srcs) != len(set(srcs)):
            continue
        out.append(pat)
    return out


def _power_lp(inst: NetworkInstance, patterns):
    """Feasibility LP for a sequence of slot patterns; returns powers (T', N)
    or None."""
    pr = inst.params
    g = inst.gains
    N = inst.n_sources
    var = {}
    for t, pat in enumerate(patterns):
        for l, s in enumerate(pat):
            if s != OFF:
                var[t, inst.links[l][0]] = len(var)
    nv = len(var)
    if nv == 0:
        return np.zeros((len(patterns), N))
    rows, rhs = [], []
    for t, pat in enumerate(patterns):
        on = [inst.links[l][0] for l, s in enumerate(pat) if s != OFF]
        relays_on = [s for s in pat if s >= 0]
        for l, s in enumerate(pat):
            if s == OFF:
                continue
            i, j = inst.links[l]
            thr = pr.beta if s == DIRECT else pr.beta1
            row = np.zeros(nv)
            row[var[t, i]] -= g.sd[i, j]
            for k in on:
                if k != i:
                    row[var[t, k]] += thr * g.sd[k, j]
            rows.append(row)
            rhs.append(-thr * pr.sigma2)
            if s >= 0:
                r = s
                a = g.rd[r, j] * pr.g2
                i_jf = pr.p_relay * sum(g.rd[q, j] for q in relays_on if q != r)
                row = np.zeros(nv)
                row[var[t, i]] -= g.sr[i, r] * a
                for k in on:
                    if k != i:
                        row[var[t, k]] += pr.beta2 * a * g.sr[k, r]
                rows.append(row)
                rhs.append(-pr.beta2 * (pr.sigma2 + i_jf + pr.sigma2 * a))
    for i in range(N):
        cols = [v for (t, k), v in var.items() if k == i]
        if cols:
            row = np.zeros(nv)
            row[cols] = 1.0
            rows.append(row)
            rhs.append(pr.energy_budget)
    res = linprog(np.zeros(nv), A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=[(pr.p_slot_min, pr.p_slot_max)] * nv, method="highs")
    if res.status != 0:
        return None
    P = np.zeros((len(patterns), N))
    for (t, i), v in var.items():
        P[t, i] = res.x[v]
    return P


def _demand_ok(inst, combo):
    pr = inst.params
    B = pr.demand_vector(inst.n_sources)
    for l, (i, _) in enumerate(inst.links):
        count = sum(1 for pat in combo if pat[l] != OFF)
        if pr.demand_mode is DemandMode.AT_MOST and count > B[i]:
            return False
        if pr.demand_mode is DemandMode.AT_LEAST and count < B[i]:
            return False
    return True


def enumerate_optimum(inst: NetworkInstance, mode="cls") -> OracleResult | None:
    """Optimal schedule by enumeration; None when nothing is feasible
    (only possible with an at-least demand)."""
    T = inst.T
    pats = [p for p in slot_patterns(inst, mode) if _power_lp(inst, [p]) is not None]
    size = {p: sum(s != OFF for s in p) for p in pats}
    combos = sorted(itertools.combinations_with_replacement(pats, T),
                    key=lambda c: -sum(size[p] for p in c))
    checked = 0
    for combo in combos:
        if not _demand_ok(inst, combo):
            continue
        checked += 1
        P = _power_lp(inst, combo)
        if P is None:
            continue
        sched = Schedule.empty(inst)
        for t, pat in enumerate(combo):
            for l, s in enumerate(pat):
                if s == OFF:
                    continue
                i, j = inst.links[l]
                sched.x[t, l] = 1
                sched.p[t, i] = P[t, i]
                if s >= 0:
                    sched.y[t, inst.relay_link_index[(i, s, j)]] = 1
        return OracleResult(sched.objective(), sched, checked)
    return None
