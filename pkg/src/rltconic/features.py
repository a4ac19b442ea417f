"""Instance features for variant selection.

Feature names are stable and listed, with definitions, in ``docs/features.md``.
Percentages use the 0-100 scale.  Values are raw; any normalisation happens in
the selector.
"""
from __future__ import annotations

import math
from collections import Counter

import networkx as nx
import numpy as np
from networkx.algorithms import community
from networkx.algorithms.approximation import treewidth_min_degree

from .poly import PolynomialProblem, Sense
from .rlt import RltModel

FEATURES_VERSION = 1

GRAPH_STATS = ("density", "modularity", "treewidth_bound", "transitivity")

FEATURE_NAMES: tuple[str, ...] = (
    "n_variables",
    "var_density_variance",
    "range_mean",
    "range_median",
    "range_variance",
    "appearances_mean",
    "appearances_variance",
    "pct_vars_not_in_degree_gt1",
    "pct_vars_not_in_degree_gt2",
    "n_constraints",
    "pct_equality_constraints",
    "pct_linear_constraints",
    "pct_quadratic_constraints",
    "n_monomials",
    "pct_linear_monomials",
    "pct_quadratic_monomials",
    "pct_linear_rlt_variables",
    "pct_quadratic_rlt_variables",
    "avg_pct_monomials_per_constraint",
    "pct_monomials_in_objective",
    "coef_mean",
    "coef_variance",
    "degree",
    "density",
    "variables_per_constraint",
    "variables_per_degree",
    "rlt_variables_per_constraint",
    "monomials_per_constraint",
) + tuple(f"{g}_{s}" for g in ("vig", "cmig") for s in GRAPH_STATS)


def _canonical_constraints(prob: PolynomialProblem):
    return sorted(prob.constraints, key=lambda c: (c.sense.value, c.rhs, tuple((t.vars, t.coefficient) for t in c.poly)))


def build_vig(prob: PolynomialProblem) -> nx.Graph:
    """Variables as nodes; an edge joins two variables sharing a monomial."""
    g = nx.Graph()
    g.add_nodes_from(range(prob.n))
    for key in sorted(prob.monomial_keys(min_degree=2)):
        vs = sorted(set(key))
        for a in range(len(vs)):
            for b in range(a + 1, len(vs)):
                g.add_edge(vs[a], vs[b])
    return g


def build_cmig(prob: PolynomialProblem) -> nx.Graph:
    """Objective/constraints and distinct monomials as nodes; edge when a monomial occurs in one."""
    g = nx.Graph()
    polys = [prob.objective] + [c.poly for c in _canonical_constraints(prob)]
    monos = sorted({t.vars for p in polys for t in p if t.vars}, key=lambda k: (len(k), k))
    g.add_nodes_from(("c", i) for i in range(len(polys)))
    g.add_nodes_from(("m",) + k for k in monos)
    for i, p in enumerate(polys):
        for t in p:
            if t.vars:
                g.add_edge(("c", i), ("m",) + t.vars)
    return g


def graph_stats(g: nx.Graph) -> dict[str, float]:
    """Density, CNM modularity, min-degree treewidth bound and transitivity."""
    n, m = g.number_of_nodes(), g.number_of_edges()
    density = 2.0 * m / (n * (n - 1)) if n > 1 else 0.0
    if m > 0:
        # relabel so CNM tie-breaking follows the canonical node order
        h = nx.convert_node_labels_to_integers(g, ordering="default")
        comms = community.greedy_modularity_communities(h)
        modularity = float(community.modularity(h, comms))
        width = treewidth_min_degree(h)[0]
    else:
        modularity = 0.0
        width = 0
    return {"density": float(density), "modularity": modularity,
            "treewidth_bound": float(width), "transitivity": float(nx.transitivity(g))}


def _var(xs) -> float:
    return float(np.var(xs)) if len(xs) else 0.0


def _mean(xs) -> float:
    return float(np.mean(xs)) if len(xs) else 0.0


def extract_features(prob: PolynomialProblem) -> dict[str, float]:
    n = prob.n
    polys = prob.polynomials()
    m = len(prob.constraints)
    delta = prob.degree
    terms = [t for p in polys for t in p if t.vars]

    present = np.zeros((len(polys), n), dtype=bool)
    for i, p in enumerate(polys):
        for v in p.variables():
            present[i, v] = True
    var_density = present.mean(axis=0) if n else np.zeros(0)
    ranges = np.asarray(prob.upper) - np.asarray(prob.lower)
    appearances = Counter(v for t in terms for v in set(t.vars))
    app = [appearances.get(j, 0) for j in range(n)]
    in_gt1 = {v for t in terms if t.degree > 1 for v in t.vars}
    in_gt2 = {v for t in terms if t.degree > 2 for v in t.vars}

    con_deg = [c.poly.degree for c in prob.constraints]
    denom_m = max(m, 1)

    monos = {t.vars for t in terms}
    n_mono = len(monos)
    lift = RltModel(prob).lift
    ncols = lift.ncols
    quad_keys = sum(1 for k in lift.keys if len(k) == 2)
    canon = _canonical_constraints(prob)
    per_con = sorted(100.0 * len([t for t in c.poly if t.vars]) / n_mono for c in canon) if n_mono else []
    coefs = sorted(t.coefficient for t in terms)  # sorted so float sums ignore input order
    possible = math.comb(n + delta, delta) - 1

    f = {
        "n_variables": float(n),
        "var_density_variance": _var(var_density),
        "range_mean": _mean(ranges),
        "range_median": float(np.median(ranges)) if n else 0.0,
        "range_variance": _var(ranges),
        "appearances_mean": _mean(app),
        "appearances_variance": _var(app),
        "pct_vars_not_in_degree_gt1": 100.0 * (n - len(in_gt1)) / n if n else 0.0,
        "pct_vars_not_in_degree_gt2": 100.0 * (n - len(in_gt2)) / n if n else 0.0,
        "n_constraints": float(m),
        "pct_equality_constraints": 100.0 * sum(c.sense is Sense.EQ for c in prob.constraints) / denom_m,
        "pct_linear_constraints": 100.0 * sum(d <= 1 for d in con_deg) / denom_m,
        "pct_quadratic_constraints": 100.0 * sum(d == 2 for d in con_deg) / denom_m,
        "n_monomials": float(n_mono),
        "pct_linear_monomials": 100.0 * sum(len(k) == 1 for k in monos) / n_mono if n_mono else 0.0,
        "pct_quadratic_monomials": 100.0 * sum(len(k) == 2 for k in monos) / n_mono if n_mono else 0.0,
        "pct_linear_rlt_variables": 100.0 * n / ncols if ncols else 0.0,
        "pct_quadratic_rlt_variables": 100.0 * quad_keys / ncols if ncols else 0.0,
        "avg_pct_monomials_per_constraint": _mean(per_con),
        "pct_monomials_in_objective": (100.0 * len([t for t in prob.objective if t.vars]) / n_mono
                                       if n_mono else 0.0),
        "coef_mean": _mean(coefs),
        "coef_variance": _var(coefs),
        "degree": float(delta),
        "density": n_mono / possible if possible > 0 else 0.0,
        "variables_per_constraint": n / denom_m,
        "variables_per_degree": n / delta,
        "rlt_variables_per_constraint": len(lift.keys) / denom_m,
        "monomials_per_constraint": n_mono / denom_m,
    }
    for name, g in (("vig", build_vig(prob)), ("cmig", build_cmig(prob))):
        for stat, val in graph_stats(g).items():
            f[f"{name}_{stat}"] = val
    return {k: float(f[k]) for k in FEATURE_NAMES}


def feature_vector(prob: PolynomialProblem) -> np.ndarray:
    f = extract_features(prob)
    return np.array([f[k] for k in FEATURE_NAMES])
