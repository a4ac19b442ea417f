"""Acceptance criteria 1-11.

Each test prints exactly one ``criterion N PASS|FAIL`` line (also when run as
``python3 tests/test_acceptance.py``) and then asserts.  Tolerances are pinned
below and are never loosened to make a criterion pass.
"""
from __future__ import annotations

import functools
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import load_eq4  # noqa: E402
from rltconic import cli  # noqa: E402
from rltconic.bnb import (BnbConfig, BnbStatus, root_bound, root_relaxation, run_variant_suite,  # noqa: E402
                         solve_problem)
from rltconic.conic import ConicProgram, NonNeg, Psd, SecondOrder, Status, solve, svec  # noqa: E402
from rltconic.conic.standard import to_standard_form  # noqa: E402
from rltconic.features import extract_features  # noqa: E402
from rltconic.instances import brute_force, ds_style_problem, evaluate_many, random_problem  # noqa: E402
from rltconic.metrics import (PaceRecord, geometric_mean_pace, lbpace, nlbpace,  # noqa: E402
                              performance_profile, profile_value)
from rltconic.poly import Sense, write_problem  # noqa: E402
from rltconic.rlt import RltModel, compute_jsets  # noqa: E402
from rltconic.selector import QrfConfig, TrainingRow, oob_evaluate, train  # noqa: E402
from rltconic.strengthen import (ALL_VARIANTS, OMEGA1, OMEGA2, Variant, eigencuts, ml_matrices,  # noqa: E402
                                 socp_constraints, variant_structure)

# pinned tolerances and budgets
C1_OBJ_TOL = 1e-5
C1_TIME_S = 10.0
C3_TOL = 1e-9
C3_INSTANCES = 20
C3_POINTS = 1000
C4_TOL = 1e-4
C4_INSTANCES = 30
C4_BUDGET_S = 600.0
C5_TOL = 1e-6
C6_TOL = 1e-6
C6_INSTANCES = 20
C7_VIOLATION = 1e-6
C7_DRIFT = 1e-7
C8_LP_TOL = 1e-6
C8_KKT_TOL = 1e-8
C10_ACCURACY = 0.90
C10_SYNTH_ROWS = 200
C10_DESK_ROWS = 40
C10_DESK_LIMIT = 0.25  # work-clock seconds per run
QRF = dict(trees=500, min_leaf=3, seed=42)


def report(k: int, ok: bool, detail: str, capsys=None) -> None:
    line = f"criterion {k:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)


# ---------------------------------------------------------------------------
# 1. worked example end to end
# ---------------------------------------------------------------------------

def criterion_1():
    prob = load_eq4()
    oracle = brute_force(prob).value
    worst_err, worst_t, bad = 0.0, 0.0, []
    for v in ALL_VARIANTS:
        t = time.perf_counter()
        res = solve_problem(prob, BnbConfig(variant=v))
        dt = time.perf_counter() - t
        err = abs(res.objective - 1.0)
        worst_err, worst_t = max(worst_err, err), max(worst_t, dt)
        if res.status is not BnbStatus.OPTIMAL or err > C1_OBJ_TOL or dt >= C1_TIME_S:
            bad.append(str(v))
    ok = not bad and abs(oracle - 1.0) <= C1_OBJ_TOL
    return ok, (f"8 variants Optimal, max |obj-1| {worst_err:.1e} (tol {C1_OBJ_TOL}), slowest {worst_t:.2f}s "
                f"(< {C1_TIME_S}s), oracle {oracle:.8f}" + (f"; failing {bad}" if bad else ""))


# ---------------------------------------------------------------------------
# 2. structural fidelity on the worked example
# ---------------------------------------------------------------------------

def criterion_2():
    prob = load_eq4()
    m = RltModel(prob)
    jsets = sorted(compute_jsets(prob))
    want_j = sorted([(0, 0), (1, 1), (0, 1, 2), (0, 3)])
    socs, _ = socp_constraints(m.jsets, m.lift)
    sdp1, _ = ml_matrices(m.jsets, OMEGA1, m.lift)
    sdp2, _ = ml_matrices(m.jsets, OMEGA2, m.lift)
    side1 = {b.J: b.side for b in sdp1}
    side2 = {b.J: b.side for b in sdp2}
    # per J-set: {1,1}, {2,2}, {1,2,3}, {1,4}
    want1 = {(0, 0): 2, (1, 1): 2, (0, 1, 2): 3, (0, 3): 2}
    want2 = {(0, 0): 3, (1, 1): 3, (0, 1, 2): 4, (0, 3): 3}
    soc_keys = {b.key for b in socs}
    want_soc = {("square", 0), ("square", 1), ("pair", 0, 1), ("pair", 0, 2), ("pair", 1, 2), ("pair", 0, 3)}
    ok = (jsets == want_j and len(socs) == 6 and soc_keys == want_soc and side1 == want1 and side2 == want2
          and sorted(side1.values()) == sorted([2, 3, 2, 2]) and sorted(side2.values()) == sorted([3, 3, 4, 3]))
    order = [(0, 0), (1, 1), (0, 1, 2), (0, 3)]
    return ok, (f"J-sets {[[v + 1 for v in J] for J in order]}, {len(socs)} SOC cones, "
                f"Sdp1 sides {[side1.get(J) for J in order]}, Sdp2 sides {[side2.get(J) for J in order]}")


# ---------------------------------------------------------------------------
# 3. validity at exact lifts
# ---------------------------------------------------------------------------

def _form_matrix(forms, lift):
    F = np.zeros((len(forms), lift.ncols))
    c = np.zeros(len(forms))
    for i, f in enumerate(forms):
        for key, coef in f.items():
            if key:
                F[i, lift.column(key)] += coef
            else:
                c[i] += coef
    return F, c


def _lift_points(lift, X):
    cols = [X] + [np.prod(X[:, list(k)], axis=1, keepdims=True) for k in lift.keys]
    return np.hstack(cols)


def _feasible_points(prob, rng, k):
    lo, hi = np.asarray(prob.lower), np.asarray(prob.upper)
    out, have = [], 0
    for _ in range(200):
        X = lo + rng.uniform(size=(4 * k, prob.n)) * (hi - lo)
        keep = np.ones(len(X), dtype=bool)
        for c in prob.constraints:
            g = evaluate_many(c.poly, X) - c.rhs
            keep &= g >= 0 if c.sense is Sense.GE else np.abs(g) <= 1e-12
        out.append(X[keep])
        have += int(keep.sum())
        if have >= k:
            break
    return np.vstack(out)[:k]


def criterion_3():
    worst = math.inf
    counts = dict(rows=0, soc=0, psd=0, cuts=0)
    short = 0
    for i in range(C3_INSTANCES):
        rng = np.random.default_rng([3, i])
        prob = random_problem(rng, n=int(rng.integers(2, 7)), degree=int(rng.integers(2, 4)),
                              constraints=int(rng.integers(0, 3)))
        base = RltModel(prob)
        structs = [variant_structure(v, base.jsets, base.lift)
                   for v in (Variant.SOCP, Variant.SDP1, Variant.SDP2, Variant.SDPCUTS)]
        model = RltModel(prob, [k for s in structs for k in s.extra_keys])
        lift = model.lift
        relax = model.relaxation()
        socs = [b for s in structs for b in s.soc_blocks]
        psds = [b for s in structs for b in s.psd_blocks + s.cut_matrices]
        cut_mats = structs[3].cut_matrices
        X = _feasible_points(prob, rng, C3_POINTS)
        short += X.shape[0] < C3_POINTS
        P = _lift_points(lift, X)
        # eigencuts separated at the root relaxation point and at perturbed lifts
        cuts = []
        for row in P[:20]:
            cuts += eigencuts(cut_mats, row + rng.normal(scale=0.5, size=row.size), lift)
        root = root_relaxation(prob, Variant.SDPCUTS)
        sf = to_standard_form(root)
        sol = solve(sf.program)
        if sol.status is Status.OPTIMAL:
            cuts += eigencuts(cut_mats, sf.column_values(sol.y), root.lift)
        rows = list(relax.rows) + [c.row for c in cuts]
        F, c = _form_matrix([r.form for r in rows], lift)
        S = P @ F.T + c - np.array([r.rhs for r in rows])
        eq = np.array([r.sense is Sense.EQ for r in rows])
        if (~eq).any():
            worst = min(worst, float(S[:, ~eq].min()))
        if eq.any():
            worst = min(worst, float(-np.abs(S[:, eq]).max()))
        for b in socs:
            Fb, cb = _form_matrix(b.entries, lift)
            V = P @ Fb.T + cb
            worst = min(worst, float((V[:, 0] - np.linalg.norm(V[:, 1:], axis=1)).min()))
        for b in psds:
            Fb, cb = _form_matrix([f for r in b.entries for f in r], lift)
            M = (P @ Fb.T + cb).reshape(-1, b.side, b.side)
            worst = min(worst, float(np.linalg.eigvalsh(M).min()))
        counts["rows"] += len(relax.rows)
        counts["soc"] += len(socs)
        counts["psd"] += len(psds)
        counts["cuts"] += len(cuts)
    ok = worst >= -C3_TOL and short == 0
    return ok, (f"{C3_INSTANCES} instances x {C3_POINTS} feasible points; {counts['rows']} rows, {counts['soc']} "
                f"SOC, {counts['psd']} PSD, {counts['cuts']} eigencuts; worst residual {worst:.2e} "
                f"(tol {C3_TOL})" + (f"; {short} instances short of points" if short else ""))


# ---------------------------------------------------------------------------
# 4, 5, 7. the 30-instance oracle suite
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def oracle_suite():
    t0 = time.perf_counter()
    out = []
    for i in range(C4_INSTANCES):
        rng = np.random.default_rng([4, i])
        prob = random_problem(rng, n=int(rng.integers(2, 5)), degree=int(rng.integers(2, 4)),
                              constraints=int(rng.integers(0, 3)))
        oracle = brute_force(prob)
        results = run_variant_suite(prob, ALL_VARIANTS, BnbConfig())
        out.append((prob, oracle, results))
    return out, time.perf_counter() - t0


def criterion_4():
    suite, elapsed = oracle_suite()
    worst, bad = 0.0, []
    for i, (prob, oracle, results) in enumerate(suite):
        for v, r in results.items():
            err = abs(r.objective - oracle.value) if r.status is BnbStatus.OPTIMAL else math.inf
            worst = max(worst, err)
            if err > C4_TOL:
                bad.append((i, str(v), str(r.status)))
    ok = not bad and elapsed < C4_BUDGET_S
    return ok, (f"{C4_INSTANCES} instances x 8 variants, max |B&B - oracle| {worst:.1e} (tol {C4_TOL}), "
                f"{elapsed:.0f}s (< {C4_BUDGET_S:.0f}s)" + (f"; mismatches {bad[:5]}" if bad else ""))


def criterion_5():
    suite, _ = oracle_suite()
    bad = []
    for i, (prob, _, _) in enumerate(suite):
        lb = {v: root_bound(prob, v) for v in (Variant.RLT, Variant.SOCP, Variant.SDP1, Variant.SDP2)}
        if not (lb[Variant.RLT] <= lb[Variant.SOCP] + C5_TOL and lb[Variant.SOCP] <= lb[Variant.SDP2] + C5_TOL):
            bad.append((i, "chain"))
        for b, full in ((Variant.SOCP_B, Variant.SOCP), (Variant.SDP1_B, Variant.SDP1),
                        (Variant.SDP2_B, Variant.SDP2)):
            lb_b = root_bound(prob, b, retained_only=True)
            if not (lb[Variant.RLT] - C5_TOL <= lb_b <= lb[full] + C5_TOL):
                bad.append((i, str(b)))
    return not bad, (f"root LB chain rlt <= socp <= sdp2 and rlt <= X-b <= X on {len(suite)} instances "
                     f"(tol {C5_TOL})" + (f"; violations {bad[:5]}" if bad else ""))


def criterion_6():
    worst = 0.0
    for i in range(C6_INSTANCES):
        rng = np.random.default_rng([6, i])
        prob = random_problem(rng, n=int(rng.integers(2, 6)), degree=2, constraints=int(rng.integers(0, 3)))
        a, b = root_bound(prob, Variant.SDP1), root_bound(prob, Variant.SOCP)
        worst = max(worst, abs(a - b))
    return worst <= C6_TOL, f"{C6_INSTANCES} quadratic instances, max |LB(sdp1) - LB(socp)| {worst:.1e} (tol {C6_TOL})"


def criterion_7():
    suite, _ = oracle_suite()
    viol, drift = [], []
    for _, _, results in suite:
        stats = results[Variant.SDPCUTS].cut_stats
        viol += stats.violations
        drift += stats.lb_changes
    ok = all(v >= C7_VIOLATION for v in viol) and all(d >= -C7_DRIFT for d in drift)
    return ok, (f"{len(viol)} eigencuts, min violation {min(viol, default=math.nan):.1e} (>= {C7_VIOLATION}); "
                f"{len(drift)} re-solves, min LB change {min(drift, default=math.nan):.1e} (>= -{C7_DRIFT})")


# ---------------------------------------------------------------------------
# 8. conic solver
# ---------------------------------------------------------------------------

def criterion_8():
    from test_conic import vertex_oracle
    worst_lp, worst_kkt, failures = 0.0, 0.0, 0
    rng = np.random.default_rng(8)
    done = 0
    while done < 40:
        n = int(rng.integers(1, 7))
        m = int(rng.integers(n + 1, 9)) if n < 8 else 8
        m = min(m, 8)
        A = rng.integers(-5, 6, size=(m, n))
        if np.linalg.matrix_rank(A) < n:
            continue
        b = A @ rng.integers(-3, 4, size=n) + rng.integers(0, 4, size=m)
        c = -(A.T @ rng.integers(0, 3, size=m))
        exact = float(vertex_oracle(c.tolist(), A.tolist(), b.tolist()))
        sol = solve(ConicProgram(c.astype(float), A.astype(float), b.astype(float), [NonNeg(m)]))
        if sol.status is not Status.OPTIMAL:
            failures += 1
        else:
            worst_lp = max(worst_lp, abs(sol.obj - exact) / (1 + abs(exact)))
            worst_kkt = max(worst_kkt, *sol.residuals)
        done += 1
    soc = solve(ConicProgram([1.0], [[-1.0], [0.0], [0.0]], [0.0, 3.0, 4.0], [SecondOrder(3)]))
    psd = solve(ConicProgram([1.0], -np.array([[1.0], [0.0], [1.0]]),
                             svec(np.array([[0.0, 1.0], [1.0, 0.0]])), [Psd(2)]))
    for s in (soc, psd):
        worst_kkt = max(worst_kkt, *s.residuals)
    ok = (failures == 0 and worst_lp <= C8_LP_TOL and soc.status is Status.OPTIMAL and psd.status is Status.OPTIMAL
          and abs(soc.obj - 5.0) <= C8_LP_TOL and abs(psd.obj - 1.0) <= C8_LP_TOL and worst_kkt <= C8_KKT_TOL)
    return ok, (f"LP vs exact vertex oracle on 40 programs: max rel err {worst_lp:.1e} (tol {C8_LP_TOL}); "
                f"SOC obj {soc.obj:.9f}; PSD obj {psd.obj:.9f}; max KKT residual {worst_kkt:.1e} "
                f"(tol {C8_KKT_TOL})")


# ---------------------------------------------------------------------------
# 9. metrics
# ---------------------------------------------------------------------------

def criterion_9():
    checks = [
        lbpace(3600, 0, 10, 1e-6) == 3600 / (10 + 1e-6),
        lbpace(100, 5, 5, 1e-6) == 100 / 1e-6,
        lbpace(60, -2, 1, 1e-6) == 60 / (3 + 1e-6),
        nlbpace({"a": 2, "b": 4}) == {"a": 1.0, "b": 0.5},
        nlbpace({"a": 5}) == {"a": 1.0},
        nlbpace({"a": 1, "b": 1}) == {"a": 1.0, "b": 1.0},
        geometric_mean_pace([1, 100]) == 10.0,
        geometric_mean_pace([7]) == 7.0,
        geometric_mean_pace([2, 8]) == 4.0,
    ]
    p = performance_profile({"i": {"s1": 1.0, "s2": 2.0}})
    checks += [profile_value(p["s1"], 1) == 1.0, profile_value(p["s2"], 1) == 0.0, profile_value(p["s2"], 2) == 1.0]
    p = performance_profile({"i": {"a": 2.0, "b": 2.0}, "j": {"a": 3.0, "b": 3.0}})
    checks += [profile_value(p["a"], 1) == 1.0, profile_value(p["b"], 1) == 1.0]
    p = performance_profile({"i": {"s1": 1.0, "s2": 2.0}, "j": {"s1": 3.0, "s2": 1.0}})
    checks += [profile_value(p["s1"], 1) == 0.5, profile_value(p["s2"], 1) == 0.5]
    rng = np.random.default_rng(9)
    for _ in range(200):
        m = {f"i{k}": {v: float(rng.lognormal(0, 2)) for v in "abcd"} for k in range(int(rng.integers(1, 8)))}
        for row in m.values():
            n = nlbpace(row)
            best = min(row.values())
            checks.append(all((n[v] == 1.0) == (row[v] == best) and 0 < n[v] <= 1 for v in row))
        for steps in performance_profile(m).values():
            rhos = [r for _, r in steps]
            checks.append(rhos == sorted(rhos) and rhos[-1] == 1.0)
    return all(checks), f"{sum(checks)}/{len(checks)} metric examples and properties hold exactly"


# ---------------------------------------------------------------------------
# 10. selector
# ---------------------------------------------------------------------------

def _synthetic_rows():
    rng = np.random.default_rng(10)
    names = [str(v) for v in ALL_VARIANTS]
    rows = []
    for i in range(C10_SYNTH_ROWS):
        f = {f"f{k}": float(rng.uniform()) for k in range(8)}
        # best variant: a threshold function of two features
        best = names[2 * (f["f0"] > 0.5) + (f["f1"] > 0.5) + 2]  # socp, socp-b, sdp1, sdp1-b
        targets = {v: 1.0 if v == best else round(0.2 + 0.5 * f["f2"] * (j + 1) / 8, 6)
                   for j, v in enumerate(names)}
        rows.append(TrainingRow(f"s{i:03d}", f, targets))
    return rows


@functools.lru_cache(maxsize=None)
def desk_rows():
    rows = []
    for i in range(C10_DESK_ROWS):
        rng = np.random.default_rng([7, i])
        n, d = int(rng.integers(3, 6)), int(rng.integers(2, 4))
        prob = ds_style_problem(rng, n=n, degree=d, density=float(rng.choice([0.1, 0.2, 0.3])),
                                constraints=int(rng.integers(1, 3)))
        res = run_variant_suite(prob, ALL_VARIANTS, BnbConfig(time_limit_s=C10_DESK_LIMIT, clock="work"))
        paces = {str(v): PaceRecord.from_run(f"ds{i:02d}", str(v), str(r.status), r.time_s, r.lb_root, r.lb_end,
                                             r.ub).pace for v, r in res.items()}
        rows.append(TrainingRow(f"ds{i:02d}", extract_features(prob), nlbpace(paces), paces))
    return rows


def criterion_10():
    synth = _synthetic_rows()
    rep = oob_evaluate(train(synth, QrfConfig(**QRF)), synth)
    rows = desk_rows()
    desk = oob_evaluate(train(rows, QrfConfig(**QRF)), rows)
    best_fixed = min(desk.fixed_pace, key=desk.fixed_pace.get)
    dominates = all(desk.policy_pace <= p for p in desk.fixed_pace.values())
    picks = {}
    for v in desk.selections.values():
        picks[v] = picks.get(v, 0) + 1
    ok = rep.top1_accuracy >= C10_ACCURACY and rep.excluded == 0 and dominates and desk.excluded == 0
    return ok, (f"synthetic OOB top-1 {rep.top1_accuracy:.3f} (>= {C10_ACCURACY}); desk geo-mean pace "
                f"policy {desk.policy_pace:.6g} vs best fixed {best_fixed} {desk.fixed_pace[best_fixed]:.6g}, "
                f"worst fixed {max(desk.fixed_pace.values()):.6g}; OOB picks {picks}")


# ---------------------------------------------------------------------------
# 11. determinism
# ---------------------------------------------------------------------------

def criterion_11(tmp: Path):
    inst = tmp / "inst"
    inst.mkdir(parents=True, exist_ok=True)
    for i in range(4):
        prob = ds_style_problem(np.random.default_rng([11, i]), n=4, degree=3, density=0.2)
        (inst / f"d{i}.pop").write_text(write_problem(prob))
    outs = []
    for k in range(2):
        out = tmp / f"run{k}.csv"
        prof = tmp / f"prof{k}.csv"
        rc = cli.main(["bench", str(inst), "--variants", "all", "--out", str(out), "--profile", str(prof),
                       "--seed", "42", "--time-limit", "0.2"])
        outs.append((rc, out.read_bytes(), prof.read_bytes()))
    ok = outs[0][0] == 0 and outs[0] == outs[1]
    return ok, f"two bench runs (4 instances x 8 variants, seed 42): results and profile CSVs byte-identical={ok}"


# ---------------------------------------------------------------------------
# pytest entry points
# ---------------------------------------------------------------------------

def _run(k, fn, capsys, *args):
    ok, detail = fn(*args)
    report(k, ok, detail, capsys)
    assert ok, detail


def test_criterion_01_worked_example(capsys):
    _run(1, criterion_1, capsys)


def test_criterion_02_structure(capsys):
    _run(2, criterion_2, capsys)


def test_criterion_03_validity(capsys):
    _run(3, criterion_3, capsys)


def test_criterion_04_oracle_equivalence(capsys):
    _run(4, criterion_4, capsys)


def test_criterion_05_root_ordering(capsys):
    _run(5, criterion_5, capsys)


def test_criterion_06_quadratic_equivalence(capsys):
    _run(6, criterion_6, capsys)


def test_criterion_07_separation(capsys):
    _run(7, criterion_7, capsys)


def test_criterion_08_conic_solver(capsys):
    _run(8, criterion_8, capsys)


def test_criterion_09_metrics(capsys):
    _run(9, criterion_9, capsys)


def test_criterion_10_selector(capsys):
    _run(10, criterion_10, capsys)


def test_criterion_11_determinism(capsys, tmp_path):
    _run(11, criterion_11, capsys, tmp_path)


if __name__ == "__main__":
    import tempfile
    failed = 0
    for k, fn in enumerate([criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
                            criterion_7, criterion_8, criterion_9, criterion_10], start=1):
        ok, detail = fn()
        report(k, ok, detail)
        failed += not ok
    with tempfile.TemporaryDirectory() as d:
        ok, detail = criterion_11(Path(d))
        report(11, ok, detail)
        failed += not ok
    sys.exit(1 if failed else 0)
