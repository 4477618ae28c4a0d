"""Best-first branch and bound over the simplex LP relaxation."""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ContractError
from ..milp import MilpModel
from ..model import NetworkInstance
from ..sinr import Schedule
from .simplex import LpSolution, solve_lp

logger = logging.getLogger(__name__)

TOL_INT = 1e-6
TOL_OBJ = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NODE_LIMIT = "node_limit"


@dataclass
class MilpSolution:
    status: str
    values: np.ndarray | None
    objective: float
    nodes_explored: int
    bound: float
    lp_iterations: int = 0


@dataclass(frozen=True)
class NodeRecord:
    depth: int
    bound: float
    incumbent: float


def _fractional(values, ints, lb, ub):
    free = ints & (ub > lb)
    frac = np.abs(values - np.round(values))
    return np.flatnonzero(free & (frac > TOL_INT)), frac


def solve_milp(model: MilpModel, node_limit=10_000,
               node_log: Callable[[NodeRecord], None] | None = None) -> MilpSolution:
    """Maximize ``model`` exactly.

    Nodes are explored best bound first; the branching variable is the
    most fractional integral one (lowest index on ties) and the 0-side
    child is created first. An integral LP point is re-solved with every
    integer fixed before it is accepted, so incumbents never carry the
    loose big-constant rows of the relaxation.
    """
    ints = model.integral.astype(bool)
    counter = itertools.count()
    iterations = 0
    incumbent, inc_obj = None, -np.inf
    heap = []
    explored = 0

    def evaluate(lb, ub, depth):
        nonlocal iterations
        sol = solve_lp(model, lb, ub)
        iterations += sol.iterations
        if sol.optimal and sol.objective > inc_obj + TOL_OBJ:
            heapq.heappush(heap, (-sol.objective, next(counter), depth, lb, ub, sol))

    evaluate(model.lb.copy(), model.ub.copy(), 0)
    if not heap:
        return MilpSolution(INFEASIBLE, None, float("nan"), 1, float("nan"), iterations)

    while heap:
        neg_bound, _, depth, lb, ub, sol = heapq.heappop(heap)
        if -neg_bound <= inc_obj + TOL_OBJ:
            continue
        if explored >= node_limit:
            heapq.heappush(heap, (neg_bound, next(counter), depth, lb, ub, sol))
            break
        explored += 1
        if node_log is not None:
            node_log(NodeRecord(depth, -neg_bound, inc_obj))
        frac_idx, frac = _fractional(sol.values, ints, lb, ub)
        if len(frac_idx) == 0:
            fixed_lb, fixed_ub = lb.copy(), ub.copy()
            rounded = np.round(sol.values[ints])
            fixed_lb[ints] = rounded
            fixed_ub[ints] = rounded
            if np.array_equal(fixed_lb, lb) and np.array_equal(fixed_ub, ub):
                polished = sol
            else:
                polished = solve_lp(model, fixed_lb, fixed_ub)
                iterations += polished.iterations
            if polished.optimal:
                if polished.objective > inc_obj + TOL_OBJ:
                    incumbent, inc_obj = polished, polished.objective
                    logger.debug("incumbent %.6g at node %d", inc_obj, explored)
                continue
            # The relaxation accepted this point only within tolerance;
            # keep searching the node by fixing integers one at a time.
            open_ints = np.flatnonzero(ints & (ub > lb))
            var = int(open_ints[0])
        else:
            dist = np.minimum(frac[frac_idx], 1.0 - frac[frac_idx])
            var = int(frac_idx[np.argmax(dist)])
        down_ub, up_lb = ub.copy(), lb.copy()
        if len(frac_idx):
            down_ub[var] = np.floor(sol.values[var])
        else:
            down_ub[var] = lb[var]
        up_lb[var] = down_ub[var] + 1.0
        if down_ub[var] >= lb[var]:
            evaluate(lb, down_ub, depth + 1)
        if up_lb[var] <= ub[var]:
            evaluate(up_lb, ub, depth + 1)

    open_bound = max((-h[0] for h in heap), default=-np.inf)
    status = NODE_LIMIT if heap and open_bound > inc_obj + TOL_OBJ else OPTIMAL
    if incumbent is None:
        if status == OPTIMAL:
            return MilpSolution(INFEASIBLE, None, float("nan"), explored, float("nan"), iterations)
        return MilpSolution(NODE_LIMIT, None, float("nan"), explored, open_bound, iterations)
    bound = max(open_bound, inc_obj) if status == NODE_LIMIT else inc_obj
    return MilpSolution(status, incumbent.values, inc_obj, explored, bound, iterations)


def extract_schedule(inst: NetworkInstance, model: MilpModel, values) -> Schedule:
    """Turn an integral solution vector into a Schedule for ``inst``.

    Works for models built on ``inst`` or on a relay-free copy of it.
    """
    values = np.asarray(values if not isinstance(values, (LpSolution, MilpSolution))
                        else values.values, dtype=float)
    ints = model.integral.astype(bool) | np.array([k is not None and k.kind != "P"
                                                   for k in model.keys])
    off = np.abs(values[ints] - np.round(values[ints]))
    if off.size and off.max() > TOL_INT:
        raise ContractError("solution is fractional; round it with the rounding module first")
    sched = Schedule.empty(inst)
    for col, key in enumerate(model.keys):
        if key.kind == "x":
            sched.x[key.t, inst.link_index[(key.i, key.j)]] = round(values[col])
        elif key.kind == "y":
            sched.y[key.t, inst.relay_link_index[(key.i, key.r, key.j)]] = round(values[col])
    for col, key in enumerate(model.keys):
        if key.kind == "P":
            active = any(sched.x[key.t, l] for l in inst.links_of_source(key.i))
            sched.p[key.t, key.i] = values[col] if active else 0.0
    return sched
