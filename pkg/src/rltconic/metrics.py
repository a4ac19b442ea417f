"""Lower-bound pace, its normalised form and performance profiles."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

EPSILON = 1e-6

RESULT_COLUMNS = ("instance", "variant", "status", "time_s", "lb_root", "lb_end", "ub", "pace", "nlbpace")
PROFILE_COLUMNS = ("variant", "tau", "rho")


def lbpace(time_s: float, lb_root: float, lb_end: float, epsilon: float = EPSILON) -> float:
    """Time spent per unit of lower-bound progress; smaller is better."""
    if not time_s > 0:
        raise ValueError("time_s must be positive")
    if lb_end < lb_root:
        raise ValueError(f"lower bound decreased from {lb_root} to {lb_end}")
    return time_s / (lb_end - lb_root + epsilon)


def nlbpace(paces: Mapping[str, float]) -> dict[str, float]:
    """Best pace divided by each pace, so the best variant scores 1.

    Infinite paces (failed runs) score 0.
    """
    if not paces:
        raise ValueError("no paces given")
    if any(not p > 0 for p in paces.values()):
        raise ValueError("paces must be positive")
    best = min(paces.values())
    if not math.isfinite(best):
        return {k: 0.0 for k in paces}
    return {k: (1.0 if p == best else best / p) for k, p in paces.items()}


@dataclass(frozen=True)
class PaceRecord:
    instance: str
    variant: str
    time_s: float
    lb_root: float
    lb_end: float
    pace: float
    status: str
    ub: float = math.nan

    @classmethod
    def from_run(cls, instance: str, variant: str, status: str, time_s: float, lb_root: float,
                 lb_end: float, ub: float = math.nan, epsilon: float = EPSILON) -> PaceRecord:
        ok = status not in ("Numerical", "Infeasible") and all(map(math.isfinite, (lb_root, lb_end)))
        pace = lbpace(max(time_s, 1e-12), lb_root, max(lb_end, lb_root), epsilon) if ok else math.inf
        return cls(instance, variant, time_s, lb_root, lb_end, pace, status, ub)


def performance_profile(paces: Mapping[str, Mapping[str, float]]) -> dict[str, list[tuple[float, float]]]:
    """Dolan-More profile from ``paces[instance][variant]``.

    Returns, per variant, sorted breakpoints ``(tau, rho(tau))`` where rho is
    the fraction of instances whose ratio to the instance best is <= tau.
    Ratios of failed runs are infinite and never counted.
    """
    if not paces:
        raise ValueError("no instances")
    variants = sorted({v for row in paces.values() for v in row})
    ratios = {v: [] for v in variants}
    for inst, row in paces.items():
        finite = [p for p in row.values() if math.isfinite(p)]
        if not finite:
            raise ValueError(f"instance {inst} has no finite pace")
        best = min(finite)
        for v in variants:
            p = row.get(v, math.inf)
            ratios[v].append(1.0 if p == best else p / best)
    m = len(paces)
    out = {}
    for v in variants:
        r = sorted(x for x in ratios[v] if math.isfinite(x))
        steps, count = [], 0
        for i, tau in enumerate(r):
            count = i + 1
            if i + 1 < len(r) and r[i + 1] == tau:
                continue
            steps.append((tau, count / m))
        out[v] = steps
    return out


def profile_value(steps: Sequence[tuple[float, float]], tau: float) -> float:
    """Evaluate a profile step function at ``tau``."""
    val = 0.0
    for t, rho in steps:
        if t <= tau:
            val = rho
        else:
            break
    return val


def geometric_mean_pace(paces: Iterable[float]) -> float:
    """exp(mean(log pace)) over the finite paces."""
    vals = [p for p in paces if math.isfinite(p)]
    if not vals:
        return math.inf
    if any(p <= 0 for p in vals):
        raise ValueError("paces must be positive")
    prod = math.prod(vals)
    if 1e-300 < prod < 1e300:
        # same value as exp(mean(log)) with one rounding instead of many
        return float(prod ** (1.0 / len(vals)))
    return float(np.exp(np.mean(np.log(vals))))


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))
    return str(x)


def results_table(records: Sequence[PaceRecord]) -> list[dict]:
    """Rows for the results CSV, with NLBpace computed per instance."""
    by_inst: dict[str, dict[str, float]] = {}
    for r in records:
        by_inst.setdefault(r.instance, {})[r.variant] = r.pace
    norm = {inst: nlbpace(row) for inst, row in by_inst.items()}
    rows = []
    for r in sorted(records, key=lambda r: (r.instance, r.variant)):
        rows.append({"instance": r.instance, "variant": r.variant, "status": r.status, "time_s": r.time_s,
                     "lb_root": r.lb_root, "lb_end": r.lb_end, "ub": r.ub, "pace": r.pace,
                     "nlbpace": norm[r.instance][r.variant]})
    return rows


def write_results_csv(records: Sequence[PaceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in results_table(records):
        w.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def read_results_csv(text: str) -> list[PaceRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(PaceRecord(row["instance"], row["variant"], float(row["time_s"]), float(row["lb_root"]),
                              float(row["lb_end"]), float(row["pace"]), row["status"], float(row["ub"])))
    return out


def write_profile_csv(profile: Mapping[str, Sequence[tuple[float, float]]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for v in sorted(profile):
        for tau, rho in profile[v]:
            w.writerow([v, _fmt(float(tau)), _fmt(float(rho))])
    return buf.getvalue()
