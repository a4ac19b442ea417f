"""Spatial branch-and-bound over RLT relaxations strengthened per variant.

Nodes are explored best-bound first (FIFO among equal bounds).  Upper bounds
come only from relaxation points whose original-space part is feasible; no
local solver is used.  Times are measured on a pluggable clock: ``wall``
(monotonic seconds) or ``work``, a deterministic charge per interior-point
iteration that makes benchmark output reproducible byte for byte.
"""
from __future__ import annotations

import enum
import heapq
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .conic import Status as ConicStatus
from .conic import solve as conic_solve
from .conic.standard import StandardForm, to_standard_form
from .poly import PolynomialProblem, check_feasible, evaluate
from .rlt import Relaxation, RltModel, Row, identity_violations
from .strengthen import (TOL_BIND, TOL_EIG, Variant, binding_filter, eigencuts, variant_structure)

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-6
WORK_PER_ITERATION = 1e-3


class BnbStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    TIME_LIMIT = "TimeLimit"
    INFEASIBLE = "Infeasible"
    NUMERICAL = "Numerical"

    def __str__(self) -> str:
        return self.value


@dataclass
class BnbConfig:
    variant: Variant = Variant.RLT
    time_limit_s: float = 60.0
    abs_gap: float = 1e-6
    rel_gap: float = 1e-6
    branch_guard: float = 0.1
    tol: float = 1e-8
    max_iter: int = 200
    feas_tol: float = 1e-6
    cut_budget: int = 20
    cut_rounds: int = 3
    tol_eig: float = TOL_EIG
    tol_bind: float = TOL_BIND
    seed: int = 0
    clock: str = "wall"

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant.parse(self.variant)
        if not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be positive")
        if not 0 < self.branch_guard < 0.5:
            raise ValueError("branch_guard must lie in (0, 0.5)")
        if self.abs_gap < 0 or self.rel_gap < 0:
            raise ValueError("gaps must be nonnegative")
        if self.tol <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.cut_budget < 0 or self.cut_rounds < 0:
            raise ValueError("cut limits must be nonnegative")
        if self.clock not in ("wall", "work"):
            raise ValueError("clock must be 'wall' or 'work'")


@dataclass
class BnbNode:
    lower: np.ndarray
    upper: np.ndarray
    depth: int = 0
    cuts: list = field(default_factory=list)  # inherited LinearCut objects
    parent_lb: float = -math.inf
    id: int = 0


@dataclass
class CutStats:
    """Eigencut bookkeeping: violations at generation and LB change per re-solve."""

    violations: list = field(default_factory=list)
    lb_changes: list = field(default_factory=list)


@dataclass
class BnbResult:
    status: BnbStatus
    x: np.ndarray | None
    ub: float
    lb: float
    lb_root: float
    lb_end: float
    nodes: int
    time_s: float
    wall_s: float
    trace: list = field(default_factory=list)  # (t_seconds, lb, ub, nodes)
    maximize: bool = False
    variant: Variant = Variant.RLT
    cut_stats: CutStats = field(default_factory=CutStats)
    retained_blocks: tuple[int, int] | None = None

    @property
    def objective(self) -> float:
        """Incumbent objective in the problem's own sense."""
        return -self.ub if self.maximize else self.ub


class _Clock:
    def __init__(self, kind: str):
        self.kind = kind
        self.start = time.perf_counter()
        self.work = 0.0

    def charge(self, cp, iterations: int) -> None:
        nx, m = cp.num_vars, cp.num_rows
        flops = nx * nx * m + nx ** 3 / 3.0
        self.work += iterations * (WORK_PER_ITERATION + flops / 1e9)

    def wall(self) -> float:
        return time.perf_counter() - self.start

    def now(self) -> float:
        return self.work if self.kind == "work" else self.wall()


@dataclass
class _NodeOutcome:
    status: ConicStatus
    lb: float
    point: np.ndarray | None
    relax: Relaxation | None
    new_cuts: list


class _Search:
    def __init__(self, prob: PolynomialProblem, cfg: BnbConfig):
        self.prob = prob
        self.cfg = cfg
        base = RltModel(prob)
        self.structure = variant_structure(cfg.variant, base.jsets, base.lift)
        self.model = RltModel(prob, self.structure.extra_keys) if self.structure.extra_keys else base
        self.soc = list(self.structure.soc_blocks)
        self.psd = list(self.structure.psd_blocks)
        self.clock = _Clock(cfg.clock)
        self.cut_stats = CutStats()

    def _solve(self, relax: Relaxation) -> tuple[StandardForm, object]:
        sf = to_standard_form(relax)
        sol = conic_solve(sf.program, tol=self.cfg.tol, max_iter=self.cfg.max_iter)
        self.clock.charge(sf.program, max(sol.iterations, 1))
        return sf, sol

    def solve_node(self, node: BnbNode, soc=None, psd=None) -> _NodeOutcome:
        soc = self.soc if soc is None else soc
        psd = self.psd if psd is None else psd
        cut_rows = [c.row for c in node.cuts]
        relax = self.model.relaxation(node.lower, node.upper, cut_rows, soc, psd)
        sf, sol = self._solve(relax)
        new_cuts = []
        if not sol.status.solved:
            return _NodeOutcome(sol.status, -math.inf, None, relax, new_cuts)
        lb, point = _bound(sol), sf.column_values(sol.y)
        mats = self.structure.cut_matrices
        for _ in range(self.cfg.cut_rounds if mats else 0):
            room = self.cfg.cut_budget - len(new_cuts)
            if room <= 0:
                break
            cuts = eigencuts(mats, point, relax.lift, self.cfg.tol_eig, node.id, room)
            if not cuts:
                break
            self.cut_stats.violations += [c.violation for c in cuts]
            new_cuts += cuts
            trial = self.model.relaxation(node.lower, node.upper, cut_rows + [c.row for c in new_cuts], soc, psd)
            sf2, sol2 = self._solve(trial)
            if sol2.status is ConicStatus.PRIMAL_INFEASIBLE:
                return _NodeOutcome(sol2.status, math.inf, None, trial, new_cuts)
            if not sol2.status.solved:
                new_cuts = new_cuts[:-len(cuts)]
                break
            self.cut_stats.lb_changes.append(_bound(sol2) - lb)
            relax, lb, point = trial, _bound(sol2), sf2.column_values(sol2.y)
        return _NodeOutcome(ConicStatus.OPTIMAL, lb, point, relax, new_cuts)


def _bound(sol) -> float:
    """Relaxation bound; a reduced-accuracy solve takes the smaller of its two objectives."""
    if sol.status is ConicStatus.NEAR_OPTIMAL and math.isfinite(sol.dual_obj):
        return min(sol.obj, sol.dual_obj)
    return sol.obj


def _gap_closed(lb: float, ub: float, cfg: BnbConfig) -> bool:
    if not math.isfinite(ub):
        return False
    return lb >= ub - max(cfg.abs_gap, cfg.rel_gap * abs(ub))


def _branch_point(lo: float, hi: float, value: float, guard: float) -> float:
    w = hi - lo
    return float(min(max(value, lo + guard * w), hi - guard * w))


def solve_problem(prob: PolynomialProblem, cfg: BnbConfig | None = None) -> BnbResult:
    """Globally minimise ``prob`` by RLT-based spatial branch-and-bound."""
    cfg = cfg or BnbConfig()
    search = _Search(prob, cfg)
    clock = search.clock
    n = prob.n
    best_x, ub = None, math.inf
    trace: list[tuple[float, float, float, int]] = []
    heap: list = []
    seq = 0
    nodes = 0
    retained = None
    soc, psd = search.soc, search.psd

    def try_incumbent(point) -> None:
        nonlocal best_x, ub
        x = np.clip(point[:n], prob.lower, prob.upper)
        if check_feasible(prob, x, cfg.feas_tol):
            val = evaluate(prob.objective, x)
            if val < ub:
                best_x, ub = x, val

    def push(node: BnbNode) -> None:
        nonlocal seq
        node.id = seq
        heapq.heappush(heap, (node.parent_lb, seq, node))
        seq += 1

    def record(lb: float) -> None:
        if not trace or lb > trace[-1][1] or ub < trace[-1][2]:
            trace.append((clock.now(), lb, ub, nodes))

    root = BnbNode(np.asarray(prob.lower, dtype=float), np.asarray(prob.upper, dtype=float))
    push(root)
    lb_root = math.nan
    global_lb = -math.inf
    status = None
    while heap:
        key, _, node = heap[0]
        global_lb = max(global_lb, min(key, ub))
        if _gap_closed(key, ub, cfg):
            heap.clear()
            break
        if nodes > 0 and clock.now() >= cfg.time_limit_s:
            status = BnbStatus.TIME_LIMIT
            break
        heapq.heappop(heap)
        if nodes > 0:
            record(global_lb)
        out = search.solve_node(node, soc, psd)
        nodes += 1
        if nodes == 1:
            if out.status is ConicStatus.PRIMAL_INFEASIBLE:
                status = BnbStatus.INFEASIBLE
                break
            if cfg.variant.binding and out.point is not None:
                soc, psd = binding_filter(out.relax, out.point, cfg.tol_bind)
                retained = (len(soc), len(psd))
                log.debug("binding filter kept %d SOC and %d PSD blocks", *retained)
        if out.status is ConicStatus.PRIMAL_INFEASIBLE:
            continue
        numerical = out.status is not ConicStatus.OPTIMAL
        lb = node.parent_lb if numerical else max(out.lb, node.parent_lb)
        if nodes == 1:
            lb_root = lb
            global_lb = lb
            record(lb)
        child_cuts = node.cuts + out.new_cuts
        if numerical:
            widths = node.upper - node.lower
            j = int(np.argmax(widths))
            if widths[j] <= 1e-9:
                continue
            at = 0.5 * (node.lower[j] + node.upper[j])
        else:
            try_incumbent(out.point)
            if _gap_closed(lb, ub, cfg):
                continue
            _, theta = identity_violations(out.relax, out.point)
            free = node.upper - node.lower > 1e-12
            theta = np.where(free, theta, -1.0)
            j = int(np.argmax(theta))
            if theta[j] <= IDENTITY_TOL:
                # relaxation is exact here; fall back to bisection only if
                # the point was rejected for feasibility
                widths = np.where(free, node.upper - node.lower, 0.0)
                j = int(np.argmax(widths))
                if widths[j] <= 1e-9:
                    continue
                at = 0.5 * (node.lower[j] + node.upper[j])
            else:
                at = _branch_point(node.lower[j], node.upper[j], out.point[j], cfg.branch_guard)
        for lo_j, hi_j in ((node.lower[j], at), (at, node.upper[j])):
            lower, upper = node.lower.copy(), node.upper.copy()
            lower[j], upper[j] = lo_j, hi_j
            push(BnbNode(lower, upper, node.depth + 1, child_cuts, lb))

    if status is None:
        if math.isfinite(ub):
            status = BnbStatus.OPTIMAL
        else:
            status = BnbStatus.INFEASIBLE
    if status is BnbStatus.INFEASIBLE:
        lb_end = math.nan
        global_lb = math.nan
    else:
        open_lb = min((k for k, _, _ in heap), default=math.inf)
        global_lb = min(max(global_lb, open_lb), ub) if status is BnbStatus.TIME_LIMIT else min(open_lb, ub)
        if status is BnbStatus.OPTIMAL:
            global_lb = max(global_lb, trace[-1][1] if trace else -math.inf)
        lb_end = global_lb
        if math.isnan(lb_root):
            lb_root = lb_end
        trace.append((clock.now(), lb_end, ub, nodes))
    return BnbResult(status, best_x, ub, global_lb, lb_root, lb_end, nodes, clock.now(), clock.wall(), trace,
                     prob.maximize, cfg.variant, search.cut_stats, retained)


def run_variant_suite(prob: PolynomialProblem, variants: Sequence[Variant], cfg: BnbConfig | None = None
                      ) -> dict[Variant, BnbResult]:
    """Run every variant with otherwise identical settings."""
    if not variants:
        raise ValueError("variant list is empty")
    cfg = cfg or BnbConfig()
    out = {}
    for v in variants:
        v = Variant.parse(v) if isinstance(v, str) else v
        try:
            out[v] = solve_problem(prob, replace(cfg, variant=v))
        except Exception as exc:  # a failed variant must not abort the suite
            log.warning("variant %s failed: %s", v, exc)
            out[v] = BnbResult(BnbStatus.NUMERICAL, None, math.inf, math.nan, math.nan, math.nan, 0,
                               math.inf, math.nan, [], prob.maximize, v)
    return out


def root_bound(prob: PolynomialProblem, variant: Variant, cfg: BnbConfig | None = None,
               retained_only: bool = False) -> float:
    """Root relaxation bound of ``variant``.

    With ``retained_only`` a binding variant is re-solved with just the
    blocks its root filter keeps, which is what its descendants use.
    """
    cfg = replace(cfg or BnbConfig(), variant=variant)
    search = _Search(prob, cfg)
    root = BnbNode(np.asarray(prob.lower, dtype=float), np.asarray(prob.upper, dtype=float))
    out = search.solve_node(root)
    if out.status is ConicStatus.PRIMAL_INFEASIBLE:
        return math.inf
    if out.status is not ConicStatus.OPTIMAL:
        return math.nan
    if retained_only and variant.binding:
        soc, psd = binding_filter(out.relax, out.point, cfg.tol_bind)
        out = search.solve_node(root, soc, psd)
        if out.status is not ConicStatus.OPTIMAL:
            return math.nan
    return out.lb


def root_relaxation(prob: PolynomialProblem, variant: Variant) -> Relaxation:
    """The root relaxation of ``variant`` before any cuts, as the search builds it."""
    search = _Search(prob, BnbConfig(variant=variant))
    return search.model.relaxation(np.asarray(prob.lower, dtype=float), np.asarray(prob.upper, dtype=float),
                                   [], search.soc, search.psd)
