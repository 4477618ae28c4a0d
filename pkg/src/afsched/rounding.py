"""LP relaxation + randomized rounding heuristic with constraint repair."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ContractError
from .milp import MilpModel
from .model import NetworkInstance
from .sinr import TOL_FEAS, Schedule, SlotEvaluator
from .solver.simplex import OPTIMAL, LpSolution, simplex

RANGE_TOL = 1e-9


class PowerPolicy(str, enum.Enum):
    KEEP_LP = "keep_lp"
    RESCALE_MAX = "rescale_max"
    REFIT = "refit"


class RepairOrder(str, enum.Enum):
    WORST_FIRST = "worst_first"
    LINK_ORDER = "link_order"


@dataclass(frozen=True)
class RoundingConfig:
    """``relay_face``: round the LP optimum that maximizes the total relay
    fraction instead of whichever optimal vertex the simplex stopped at."""

    trials: int = 32
    rng_seed: int = 0
    power_policy: PowerPolicy = PowerPolicy.KEEP_LP
    order: RepairOrder = RepairOrder.WORST_FIRST
    relay_face: bool = True

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be an integer >= 1")
        object.__setattr__(self, "power_policy", PowerPolicy(self.power_policy))
        object.__setattr__(self, "order", RepairOrder(self.order))


@dataclass
class RepairReport:
    schedule: Schedule
    x_flips: int
    y_flips: int

    @property
    def flips(self):
        return self.x_flips + self.y_flips


def trial_seed(rng_seed, trial):
    """Seed of one rounding trial, derived from the configured seed."""
    return int(np.random.SeedSequence([int(rng_seed), int(trial)]).generate_state(2, np.uint64)[0])


def _check_unit(name, arr):
    arr = np.asarray(arr, dtype=float)
    if arr.size and (arr.min() < -RANGE_TOL or arr.max() > 1 + RANGE_TOL or not np.all(np.isfinite(arr))):
        raise ContractError(f"{name} must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)


def randomized_round(x_frac, y_frac, seed):
    """Set each activation to 1 with probability equal to its fractional
    value. Variable k always consumes the k-th uniform draw of the seeded
    stream (x first, then y), so the outcome of one variable does not
    depend on the others."""
    x_frac = _check_unit("x", x_frac)
    y_frac = _check_unit("y", y_frac)
    u = np.random.default_rng(seed).random(x_frac.size + y_frac.size)
    x_hat = (u[:x_frac.size] < x_frac.ravel()).reshape(x_frac.shape).astype(np.int8)
    y_hat = (u[x_frac.size:] < y_frac.ravel()).reshape(y_frac.shape).astype(np.int8)
    return x_hat, y_hat


def _rescale(inst, p):
    """Scale every active power by one common factor, as far as the
    per-slot maximum and the energy budget allow. A common factor never
    lowers any SINR: noise and relay interference stay fixed."""
    pr = inst.params
    on = p > 0
    if not on.any():
        return p
    peak = np.where(on, p, 0).max(axis=0)
    spent = p.sum(axis=0)
    used = peak > 0
    factor = min(np.min(pr.p_slot_max / peak[used]), np.min(pr.energy_budget / spent[used]))
    return p * factor if factor > 1 else p


def _enforce_structure(inst, x, y):
    """C6 (relay only with its link), one link per source, one relay per
    source, one source per relay; lowest index kept. Returns flip counts."""
    xf = yf = 0
    for t in range(x.shape[0]):
        for i in range(inst.n_sources):
            ls = [l for l in inst.links_of_source(i) if x[t, l]]
            for l in ls[1:]:
                x[t, l] = 0
                xf += 1
        src_used, rel_used = set(), set()
        for k, (i, r, j) in enumerate(inst.relay_links):
            if not y[t, k]:
                continue
            if not x[t, inst.link_index[(i, j)]] or i in src_used or r in rel_used:
                y[t, k] = 0
                yf += 1
            else:
                src_used.add(i)
                rel_used.add(r)
    return xf, yf


def _drop_link(inst, x, y, p, t, l):
    """Switch link l off in slot t with its relay legs; returns y flips."""
    i, j = inst.links[l]
    x[t, l] = 0
    if not any(x[t, m] for m in inst.links_of_source(i)):
        p[t, i] = 0.0
    flips = 0
    for k in inst.relay_links_of((i, j)):
        if y[t, k]:
            y[t, k] = 0
            flips += 1
    return flips


def slot_powers(inst: NetworkInstance, x_t, y_t, margin=1e-6):
    """Minimum total power meeting every split-threshold requirement of one
    slot's activation pattern, or None when no powers within the per-slot
    bounds do. Thresholds are raised by ``margin`` (relative) so the result
    survives floating-point re-evaluation."""
    pr = inst.params
    g = inst.gains
    links = [l for l in np.flatnonzero(x_t)]
    srcs = sorted({inst.links[l][0] for l in links})
    out = np.zeros(inst.n_sources)
    if not srcs:
        return out
    col = {i: c for c, i in enumerate(srcs)}
    relays_on = {inst.relay_links[k][1] for k in np.flatnonzero(y_t)}
    rows, rhs = [], []
    b1, b2, b = (v * (1 + margin) for v in (pr.beta1, pr.beta2, pr.beta))
    for l in links:
        i, j = inst.links[l]
        ks = [k for k in inst.relay_links_of((i, j)) if y_t[k]]
        thr = b1 if ks else b
        row = np.array([-thr * g.sd[k, j] for k in srcs])
        row[col[i]] = g.sd[i, j]
        rows.append(row)
        rhs.append(thr * pr.sigma2)
        for k in ks:
            _, r, _ = inst.relay_links[k]
            a = g.rd[r, j] * pr.g2
            i_jf = pr.p_relay * sum(g.rd[q, j] for q in relays_on if q != r)
            row = np.array([-b2 * a * g.sr[s, r] for s in srcs])
            row[col[i]] = g.sr[i, r] * a
            rows.append(row)
            rhs.append(b2 * (pr.sigma2 + i_jf + pr.sigma2 * a))
    n = len(srcs)
    sol = simplex(-np.ones(n), np.array(rows), np.array(rhs), np.full(len(rhs), np.inf),
                  np.full(n, pr.p_slot_min), np.full(n, pr.p_slot_max))
    if not sol.optimal:
        return None
    out[srcs] = np.clip(sol.values, pr.p_slot_min, pr.p_slot_max)
    return out


def _slot_violation(inst, ev, x_t, y_t, p_t, thr):
    """Most violated check in one slot as (score, kind, index), or None.
    Scores are achieved/required ratios; ties go to links before relay
    legs, then to the lowest index."""
    b1, b2, b, lo = thr
    terms = ev.terms(x_t, y_t, p_t)
    worst = None
    for l, (i, j) in enumerate(inst.links):
        if not x_t[l]:
            continue
        if p_t[i] < lo:
            cand = (0.0, 0, l)
        else:
            relayed = any(y_t[k] for k in inst.relay_links_of((i, j)))
            cand = (terms.direct[l] / (b1 if relayed else b), 0, l)
        if cand[0] < 1.0 and (worst is None or cand < worst):
            worst = cand
    for k in np.flatnonzero(y_t):
        cand = (terms.af[k] / b2, 1, int(k))
        if cand[0] < 1.0 and (worst is None or cand < worst):
            worst = cand
    return worst


def repair_report(inst: NetworkInstance, lp_powers, x_hat, y_hat,
                  policy=PowerPolicy.KEEP_LP, order=RepairOrder.WORST_FIRST) -> RepairReport:
    """Make a rounded point feasible by switching activations off.

    Structural rules go first (lowest index kept). Kept sources transmit
    at their LP power, lifted to the per-slot minimum; a source over its
    energy budget loses its latest slots. Then each slot is cleaned:

    - ``worst_first`` (default) repeatedly removes the most violated
      activation (a relay leg whose AF term is short, or a link whose
      direct term is short) until every check passes;
    - ``link_order`` makes one pass in (t, i, j, r) order, checking each
      link against everything still switched on.

    Nothing is ever switched on and every removal only lowers
    interference, so each slot needs at most one flip per variable.
    """
    pr = inst.params
    ev = SlotEvaluator(inst)
    x = np.array(x_hat, dtype=np.int8, copy=True)
    y = np.array(y_hat, dtype=np.int8, copy=True)
    if not (np.isin(x, (0, 1)).all() and np.isin(y, (0, 1)).all()):
        raise ContractError("repair expects binary activations")
    T = x.shape[0]
    x_flips, y_flips = _enforce_structure(inst, x, y)

    src_on = np.zeros((T, inst.n_sources), dtype=bool)
    for l, (i, _) in enumerate(inst.links):
        src_on[:, i] |= x[:, l].astype(bool)
    lp_powers = np.nan_to_num(np.asarray(lp_powers, dtype=float))
    p = np.where(src_on, np.clip(lp_powers, pr.p_slot_min, pr.p_slot_max), 0.0)
    if PowerPolicy(policy) is PowerPolicy.RESCALE_MAX:
        p = _rescale(inst, p)

    thr = (pr.beta1 * (1 - TOL_FEAS), pr.beta2 * (1 - TOL_FEAS),
           pr.beta * (1 - TOL_FEAS), pr.p_slot_min * (1 - TOL_FEAS))
    refit = PowerPolicy(policy) is PowerPolicy.REFIT
    for t in range(T):
        if refit or RepairOrder(order) is RepairOrder.WORST_FIRST:
            while True:
                if refit:
                    fitted = slot_powers(inst, x[t], y[t])
                    if fitted is not None:
                        p[t] = fitted
                        break
                worst = _slot_violation(inst, ev, x[t], y[t], p[t], thr)
                if worst is None:
                    break
                _, kind, idx = worst
                if kind == 1:
                    y[t, idx] = 0
                    y_flips += 1
                else:
                    x_flips += 1
                    y_flips += _drop_link(inst, x, y, p, t, idx)
            continue
        b1, b2, b, lo = thr
        for l, (i, j) in enumerate(inst.links):
            if not x[t, l]:
                continue
            ks = [k for k in inst.relay_links_of((i, j)) if y[t, k]]
            terms = ev.terms(x[t], y[t], p[t])
            if p[t, i] < lo or terms.direct[l] < (b1 if ks else b):
                x_flips += 1
                y_flips += _drop_link(inst, x, y, p, t, l)
                continue
            for k in ks:
                if ev.terms(x[t], y[t], p[t]).af[k] < b2:
                    y[t, k] = 0
                    y_flips += 1
                    if ev.terms(x[t], y[t], p[t]).direct[l] < b:
                        x_flips += 1
                        _drop_link(inst, x, y, p, t, l)

    # removals only lower interference, so dropping whole slots of a
    # source that overspends cannot break any other link
    budget = pr.energy_budget * (1 + TOL_FEAS)
    for i in range(inst.n_sources):
        for t in reversed(range(T)):
            if p[:, i].sum() <= budget:
                break
            for l in inst.links_of_source(i):
                if x[t, l]:
                    x_flips += 1
                    y_flips += _drop_link(inst, x, y, p, t, l)
    return RepairReport(Schedule(x, y, p), x_flips, y_flips)


def repair(inst, lp_powers, x_hat, y_hat, policy=PowerPolicy.KEEP_LP,
           order=RepairOrder.WORST_FIRST) -> Schedule:
    return repair_report(inst, lp_powers, x_hat, y_hat, policy, order).schedule


def lp_fractions(inst: NetworkInstance, model: MilpModel, values):
    """Split an LP solution vector into (x, y, P) arrays shaped like a
    Schedule of ``inst``."""
    sched = Schedule.empty(inst)
    x = np.zeros(sched.x.shape)
    y = np.zeros(sched.y.shape)
    p = np.zeros(sched.p.shape)
    for col, key in enumerate(model.keys):
        if key.kind == "x":
            x[key.t, inst.link_index[(key.i, key.j)]] = values[col]
        elif key.kind == "y":
            y[key.t, inst.relay_link_index[(key.i, key.r, key.j)]] = values[col]
        else:
            p[key.t, key.i] = values[col]
    return x, y, p


def round_once(inst, x_frac, y_frac, p_frac, seed, policy=PowerPolicy.KEEP_LP,
               order=RepairOrder.WORST_FIRST) -> Schedule:
    x_hat, y_hat = randomized_round(x_frac, y_frac, seed)
    return repair(inst, p_frac, x_hat, y_hat, policy, order)


def relay_face(model: MilpModel, lp_solution, tol=1e-7):
    """Among optimal points of the relaxation, one with the largest total
    relay fraction. The relay legs never appear in the objective, so the
    simplex vertex often has every relay fraction at zero, which would
    leave rounding nothing to draw. Falls back to ``lp_solution`` if the
    second solve fails."""
    y_cols = np.array([k.kind == "y" for k in model.keys])
    if not y_cols.any():
        return lp_solution
    lo, hi = model.row_bounds()
    A = sp.vstack([model.A, sp.csr_matrix(model.c)]).tocsr()
    z = lp_solution.objective
    second = simplex(y_cols.astype(float), A, np.append(lo, z - tol * max(1.0, abs(z))),
                     np.append(hi, np.inf), model.lb, model.ub)
    if not second.optimal:
        return lp_solution
    return LpSolution(OPTIMAL, second.values, float(model.c @ second.values),
                      lp_solution.iterations + second.iterations)


def _is_integral(values, tol=1e-9):
    return bool(np.all(np.abs(values - np.round(values)) <= tol))


def round_best_of_k(inst: NetworkInstance, model: MilpModel, lp_solution,
                    cfg: RoundingConfig = RoundingConfig()) -> Schedule:
    """Best schedule over ``cfg.trials`` independent round-and-repair passes
    (highest objective, earliest trial on ties).

    An integral LP point that already passes repair untouched is returned
    as is; otherwise the relay-rich optimal face is used when configured.
    """
    if not lp_solution.optimal:
        raise ContractError(f"LP relaxation is {lp_solution.status}, nothing to round")
    x_frac, y_frac, p_frac = lp_fractions(inst, model, lp_solution.values)
    if _is_integral(x_frac) and _is_integral(y_frac):
        x_int, y_int = np.round(x_frac).astype(np.int8), np.round(y_frac).astype(np.int8)
        rep = repair_report(inst, p_frac, x_int, y_int, cfg.power_policy, cfg.order)
        if rep.flips == 0:
            return rep.schedule
    if cfg.relay_face:
        face = relay_face(model, lp_solution)
        x_frac, y_frac, p_frac = lp_fractions(inst, model, face.values)
    best, best_obj = None, -1.0
    for k in range(cfg.trials):
        sched = round_once(inst, x_frac, y_frac, p_frac, trial_seed(cfg.rng_seed, k),
                           cfg.power_policy, cfg.order)
        obj = sched.objective()
        if obj > best_obj:
            best, best_obj = sched, obj
    return best
