"""Interference, cooperative SINR and schedule validation.

A slot has a broadcast phase (active sources transmit) and a forwarding
phase (active relays amplify what they received). A link counts as
delivered when the sum of its direct and relayed SINR reaches the
decoding threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ValidationError, Violation
from .model import NetworkInstance, NodeId, Role

SCHEDULE_FORMAT = "afsched-schedule/1"
TOL_FEAS = 1e-7


@dataclass(eq=False)
class Schedule:
    """Activations and powers over T slots.

    ``x[t, l]`` activates link ``inst.links[l]``; ``y[t, k]`` activates
    relay link ``inst.relay_links[k]``; ``p[t, i]`` is the power of source
    i in mW.
    """

    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    @classmethod
    def empty(cls, inst: NetworkInstance):
        T = inst.T
        return cls(x=np.zeros((T, len(inst.links)), dtype=np.int8),
                   y=np.zeros((T, len(inst.relay_links)), dtype=np.int8),
                   p=np.zeros((T, inst.n_sources)))

    def copy(self):
        return Schedule(self.x.copy(), self.y.copy(), self.p.copy())

    @property
    def T(self):
        return self.x.shape[0]

    def objective(self):
        """(1/T) times the number of delivered link activations."""
        return float(self.x.sum()) / self.T

    def normalized_throughput(self, n_sources):
        return float(self.x.sum()) / (n_sources * self.T)

    def equals(self, other: "Schedule"):
        return (np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and np.array_equal(self.p, other.p))

    def to_dict(self, inst: NetworkInstance):
        records = []
        for t in range(self.T):
            for l, (i, j) in enumerate(inst.links):
                relays = [inst.relay_links[k][1] for k in inst.relay_links_of((i, j))
                          if self.y[t, k]]
                emit = self.x[t, l] or relays or (
                    self.p[t, i] != 0 and not any(self.x[t, inst.links_of_source(i)])
                    and l == inst.links_of_source(i)[0])
                if not emit:
                    continue
                for r in relays or [None]:
                    records.append({"t": t, "i": i, "j": j, "x": int(self.x[t, l]),
                                    "r": r, "p_mw": float(self.p[t, i])})
        return {"format": SCHEDULE_FORMAT, "slots": self.T, "records": records}

    @classmethod
    def from_dict(cls, inst: NetworkInstance, d):
        if d.get("format") != SCHEDULE_FORMAT:
            raise ValidationError("format", f"expected {SCHEDULE_FORMAT!r}")
        if d["slots"] != inst.T:
            raise ValidationError("slots", f"schedule has {d['slots']} slots, instance has {inst.T}")
        sched = cls.empty(inst)
        for rec in d["records"]:
            t, i, j = rec["t"], rec["i"], rec["j"]
            if not 0 <= t < inst.T or (i, j) not in inst.link_index:
                raise ValidationError("records", f"unknown slot/link in {rec}")
            sched.x[t, inst.link_index[(i, j)]] = rec.get("x", 1)
            if rec.get("r") is not None:
                k = inst.relay_link_index.get((i, rec["r"], j))
                if k is None:
                    raise ValidationError("records", f"unknown relay link in {rec}")
                sched.y[t, k] = 1
            sched.p[t, i] = rec["p_mw"]
        return sched

    def dumps(self, inst):
        return json.dumps(self.to_dict(inst), indent=1) + "\n"

    @classmethod
    def loads(cls, inst, text):
        return cls.from_dict(inst, json.loads(text))

    def save(self, inst, path):
        Path(path).write_text(self.dumps(inst))

    @classmethod
    def load(cls, inst, path):
        return cls.loads(inst, Path(path).read_text())


@dataclass(frozen=True)
class SinrBreakdown:
    direct_term: float
    af_term: float
    total: float
    i_jb: float
    i_jf: float
    i_rb: float


def active_sources(inst: NetworkInstance, sched: Schedule, t):
    act = np.zeros(inst.n_sources, dtype=bool)
    for l, (i, _) in enumerate(inst.links):
        if sched.x[t, l]:
            act[i] = True
    return act


def active_relays(inst: NetworkInstance, sched: Schedule, t):
    act = np.zeros(inst.n_relays, dtype=bool)
    for k, (_, r, _) in enumerate(inst.relay_links):
        if sched.y[t, k]:
            act[r] = True
    return act


def _check_node(inst, node: NodeId):
    limit = {Role.SOURCE: inst.n_sources, Role.RELAY: inst.n_relays,
             Role.DESTINATION: inst.n_destinations}[node.role]
    if not 0 <= node.index < limit:
        raise KeyError(f"{node} does not exist in this instance")


def broadcast_interference(inst: NetworkInstance, sched: Schedule, t,
                           victim: NodeId, excluded_source: NodeId | None):
    """Power received at ``victim`` during the broadcast phase of slot t from
    every active source other than ``excluded_source``."""
    _check_node(inst, victim)
    if victim.role is Role.SOURCE:
        raise ContractError("broadcast interference is measured at a relay or destination")
    if excluded_source is not None:
        _check_node(inst, excluded_source)
    col = inst.gains.sd[:, victim.index] if victim.role is Role.DESTINATION \
        else inst.gains.sr[:, victim.index]
    act = active_sources(inst, sched, t)
    if excluded_source is not None:
        act[excluded_source.index] = False
    return float(np.dot(col[act], sched.p[t, act]))


def forward_interference(inst: NetworkInstance, sched: Schedule, t,
                         dest: NodeId, excluded_relay: NodeId | None):
    """Power received at ``dest`` during the forwarding phase of slot t from
    every active relay other than ``excluded_relay``."""
    _check_node(inst, dest)
    if dest.role is not Role.DESTINATION:
        raise ContractError("forwarding interference is measured at a destination")
    act = active_relays(inst, sched, t)
    if excluded_relay is not None:
        _check_node(inst, excluded_relay)
        act[excluded_relay.index] = False
    return float(inst.params.p_relay * inst.gains.rd[act, dest.index].sum())


def cooperative_sinr(inst: NetworkInstance, sched: Schedule, t, i, r, j) -> SinrBreakdown:
    """Direct plus amplify-and-forward SINR of source i at destination j in
    slot t, optionally relayed through relay r (``None`` for no relay)."""
    l = inst.link_index.get((i, j))
    if l is None or not sched.x[t, l]:
        raise ContractError(f"link ({i},{j}) is not scheduled in slot {t}")
    g = inst.gains
    sigma2 = inst.params.sigma2
    src, dst = NodeId.source(i), NodeId.destination(j)
    p = sched.p[t, i]
    i_jb = broadcast_interference(inst, sched, t, dst, src)
    direct = p * g.sd[i, j] / (i_jb + sigma2)
    if r is None:
        return SinrBreakdown(direct, 0.0, direct, i_jb, 0.0, 0.0)
    k = inst.relay_link_index.get((i, r, j))
    if k is None or not sched.y[t, k]:
        raise ContractError(f"relay link ({i},{r},{j}) is not scheduled in slot {t}")
    rel = NodeId.relay(r)
    i_jf = forward_interference(inst, sched, t, dst, rel)
    i_rb = broadcast_interference(inst, sched, t, rel, src)
    amp = g.rd[r, j] * inst.params.g2
    af = p * g.sr[i, r] * amp / (sigma2 + i_jf + (sigma2 + i_rb) * amp)
    return SinrBreakdown(direct, af, direct + af, i_jb, i_jf, i_rb)


def strict_relay_power(inst: NetworkInstance, sched: Schedule, t, i, r):
    """Diagnostic only: the power relay r would radiate if it scaled its
    whole received signal (useful part, interference and noise) by g2."""
    rel = NodeId.relay(r)
    received = sched.p[t, i] * inst.gains.sr[i, r] + broadcast_interference(
        inst, sched, t, rel, NodeId.source(i))
    return inst.params.g2 * (inst.params.sigma2 + received)


@dataclass(frozen=True)
class SlotTerms:
    """Vectorized SINR pieces for one slot under given activations.

    ``direct[l]`` is the direct SINR of link l and ``af[k]`` the relayed
    SINR of relay link k, both computed as if the link were active.
    """

    direct: np.ndarray
    af: np.ndarray


class SlotEvaluator:
    """Precomputed index arrays for fast per-slot SINR evaluation."""

    def __init__(self, inst: NetworkInstance):
        self.inst = inst
        self.link_src = np.array([i for i, _ in inst.links], dtype=int)
        self.link_dst = np.array([j for _, j in inst.links], dtype=int)
        rl = np.array(inst.relay_links, dtype=int).reshape(-1, 3)
        self.rl_src, self.rl_rel, self.rl_dst = rl[:, 0], rl[:, 1], rl[:, 2]
        self.rl_link = np.array([inst.link_index[(i, j)] for i, _, j in inst.relay_links],
                                dtype=int)
        g = inst.gains
        self.g_direct = g.sd[self.link_src, self.link_dst]
        self.amp = g.rd[self.rl_rel, self.rl_dst] * inst.params.g2
        self.g_af = g.sr[self.rl_src, self.rl_rel] * self.amp

    def terms(self, x_t, y_t, p_t) -> SlotTerms:
        inst = self.inst
        g = inst.gains
        sigma2 = inst.params.sigma2
        src_on = np.zeros(inst.n_sources, dtype=bool)
        src_on[self.link_src[x_t.astype(bool)]] = True
        p_on = np.where(src_on, p_t, 0.0)
        own = p_on[self.link_src]
        i_jb = p_on @ g.sd[:, self.link_dst] - own * self.g_direct
        direct = p_t[self.link_src] * self.g_direct / (i_jb + sigma2)
        if len(self.rl_src) == 0:
            return SlotTerms(direct, np.zeros(0))
        rel_on = np.zeros(inst.n_relays, dtype=bool)
        rel_on[self.rl_rel[y_t.astype(bool)]] = True
        own_rb = p_on[self.rl_src] * g.sr[self.rl_src, self.rl_rel]
        i_rb = p_on @ g.sr[:, self.rl_rel] - own_rb
        fwd = inst.params.p_relay * (rel_on[:, None] * g.rd)
        i_jf = fwd[:, self.rl_dst].sum(axis=0) - fwd[self.rl_rel, self.rl_dst]
        af = p_t[self.rl_src] * self.g_af / (sigma2 + i_jf + (sigma2 + i_rb) * self.amp)
        return SlotTerms(direct, af)


def validate_schedule(inst: NetworkInstance, sched: Schedule, tol=TOL_FEAS) -> list[Violation]:
    """Return every reason ``sched`` is not a decodable, admissible schedule.

    Decodability uses the combined direct + relayed SINR against the full
    threshold, not the per-phase split thresholds.
    """
    pr = inst.params
    T, L, K = inst.T, len(inst.links), len(inst.relay_links)
    if sched.x.shape != (T, L) or sched.y.shape != (T, K) or sched.p.shape != (T, inst.n_sources):
        return [Violation("shape", "schedule dimensions do not match the instance")]
    out = []
    if not np.isin(sched.x, (0, 1)).all() or not np.isin(sched.y, (0, 1)).all():
        out.append(Violation("C1", "activations must be binary"))
    if not np.all(np.isfinite(sched.p)):
        return out + [Violation("C8", "powers must be finite")]
    ev = SlotEvaluator(inst)
    beta = pr.beta
    for t in range(T):
        x_t, y_t, p_t = sched.x[t], sched.y[t], sched.p[t]
        for k in np.flatnonzero(y_t):
            if not x_t[ev.rl_link[k]]:
                out.append(Violation("C6", f"slot {t}: relay link {inst.relay_links[k]} active "
                                           f"while its source link is off"))
        for i in range(inst.n_sources):
            ks = [k for k in range(K) if ev.rl_src[k] == i and y_t[k]]
            if len(ks) > 1:
                out.append(Violation("C5", f"slot {t}: source {i} uses {len(ks)} relays"))
            ls = [l for l in inst.links_of_source(i) if x_t[l]]
            if len(ls) > 1:
                out.append(Violation("one-destination",
                                     f"slot {t}: source {i} sends on {len(ls)} links"))
            if ls:
                if not pr.p_slot_min * (1 - tol) <= p_t[i] <= pr.p_slot_max * (1 + tol):
                    out.append(Violation("C8", f"slot {t}: source {i} power {float(p_t[i]):.6g} mW "
                                               f"outside [{pr.p_slot_min}, {pr.p_slot_max}]"))
            elif p_t[i] != 0:
                out.append(Violation("C8", f"slot {t}: idle source {i} has power {float(p_t[i]):.6g} mW"))
        for r in range(inst.n_relays):
            n_served = int(sum(y_t[k] for k in range(K) if ev.rl_rel[k] == r))
            if n_served > 1:
                out.append(Violation("C5'", f"slot {t}: relay {r} serves {n_served} links"))
        terms = ev.terms(x_t, y_t, p_t)
        for l in np.flatnonzero(x_t):
            ks = [k for k in inst.relay_links_of(inst.links[l]) if y_t[k]]
            total = terms.direct[l] + (terms.af[ks[0]] if ks else 0.0)
            if not total >= beta * (1 - tol):
                out.append(Violation("SINR", f"slot {t}: link {inst.links[l]} SINR {float(total):.6g} "
                                             f"below threshold {float(beta):.6g}"))
    spent = sched.p.sum(axis=0)
    budget = pr.energy_budget
    for i in np.flatnonzero(spent > budget * (1 + tol)):
        out.append(Violation("C7", f"source {i} spends {float(spent[i]):.6g} mW over the horizon, "
                                   f"budget {float(budget):.6g}"))
    return out
