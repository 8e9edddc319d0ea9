"""The nine acceptance checks, each returning a plain dict with a pass flag.

Shared by the test suite and ``lschjb report-all``; every check is
deterministic for a fixed seed.
"""

from __future__ import annotations

import time
from functools import lru_cache

import numpy as np

from .extreal import Axis
from .geometry import QSample, parametrize_theta
from .models import (builtin, check_all_H, check_condition_A, conjugate_pair_fidelity, sec4_V)
from .reduction import barron_jensen_diagnostic, build_hbar, hbar_identities, sec3_printed
from .valuefn import (DPConfig, closed_form_error, extract_trajectory, lagrangian_conjugate, scaled_hamiltonian,
                      solve_value, verify_lsc_solution)
from .viability import NoValidStepError, audit_eps_approx, build_eps_approx, step_bound

START = (0.2, 0.9)
EPSILONS = (0.1, 0.05, 0.025)


def _timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


@lru_cache(maxsize=4)
def sec4_field(nt: int = 201, nx: int = 401):
    cfg = DPConfig(Axis(0.0, 1.0, nt, "t"), Axis(-2.0, 2.0, nx, "x"), builtin("sec4-L"),
                   lambda x: sec4_V(1.0, x))
    return _timed(solve_value, cfg)


def criterion_1() -> dict:
    rows = []
    for name in ("ex1", "ex2", "ex4", "sec3", "sec4-L"):
        r, dt = _timed(conjugate_pair_fidelity, name)
        rows.append({"model": name, "pass": r["pass"] and dt < 10.0, "seconds": dt,
                     "sup_error": max(p["sup_error"] for p in r["points"]),
                     "domain_error": max(p["domain_error"] for p in r["points"])})
    return {"passed": all(r["pass"] for r in rows), "pairs": rows,
            "summary": "; ".join(f"{r['model']} err={r['sup_error']:.2e}" for r in rows)}


def criterion_2(doubling: bool = True) -> dict:
    f1, dt = sec4_field(201, 401)
    kink = lambda t: 2.0 * t - 1.0  # noqa: E731
    e1 = closed_form_error(f1, sec4_V, kink=kink)["sup_error"]
    out = {"sup_error": e1, "seconds": dt, "error_ok": e1 <= 5e-2, "runtime_ok": dt < 60.0}
    if doubling:
        f2, dt2 = sec4_field(401, 801)
        e2 = closed_form_error(f2, sec4_V, kink=kink)["sup_error"]
        out.update(sup_error_doubled=e2, ratio=e1 / e2, ratio_ok=e1 / e2 >= 1.5, seconds_doubled=dt2)
    out["passed"] = bool(out["error_ok"] and out["runtime_ok"] and out.get("ratio_ok", True))
    out["summary"] = f"sup err {e1:.4f} (<= 5e-2), doubling ratio {out.get('ratio', float('nan')):.3f} (>= 1.5)"
    return out


def criterion_3() -> dict:
    L = builtin("sec4-L")
    V = builtin("sec4-V")
    H = lagrangian_conjugate(L)
    g = lambda x: sec4_V(1.0, x)  # noqa: E731
    probes = [(t, x) for t in np.linspace(0.0, 1.0, 11) for x in np.linspace(-2.0, 2.0, 21)]
    r0 = verify_lsc_solution(V, H, g, probes)
    r2 = verify_lsc_solution(V, scaled_hamiltonian(H, 2.0), g, probes)
    rs = verify_lsc_solution(lambda t, x: sec4_V(t, x) + 0.5, H, g, probes[:20])
    mv = r0.summary["max_violation"]
    ok = mv <= 1e-6 and r2.verdict == "fail" and rs.verdict == "fail"
    return {"passed": bool(ok), "max_violation": mv, "scaled_verdict": r2.verdict,
            "scaled_violation": r2.summary["max_violation"], "shifted_verdict": rs.verdict,
            "shifted_terminal_error": rs.summary["terminal_error"],
            "summary": f"max violation {mv:.2e}; 2H {r2.verdict}; shifted {rs.verdict}"}


def criterion_4(seed: int = 0) -> dict:
    rep = sec3_printed()
    hb = build_hbar(rep)
    rng = np.random.default_rng(seed)
    n = 10_000
    t = rng.uniform(0.0, 1.0, n)
    x = rng.uniform(-3.0, 3.0, n)
    r = rng.uniform(-1.0, 1.0, n)
    p = rng.uniform(-4.0, 4.0, n)
    q = rng.uniform(-3.0, 3.0, n)
    err = float(np.max(np.abs(hb.eval(t, x, r, p, q) - np.maximum(np.abs(p) * np.abs(x) + q, 0.0))))
    ids = hbar_identities(hb, builtin("sec3"), seed=seed)
    bj = barron_jensen_diagnostic(builtin("sec3"), {"q": [0.5, 1.0, 2.0], "p": 1.0})
    jumps = {}
    for case in bj["cases"]:
        at0 = [j for j in case["jumps"] if j["x"] == 0.0]
        jumps[case["q"]] = at0[0]["magnitude"] if at0 else None
    eps = 1e-12
    jump_ok = all(m is not None and abs(m - q) <= 1e-6 for q, m in jumps.items())
    ok = err <= eps and ids["homogeneity_max_rel_error"] <= eps and ids["restriction_max_error"] <= eps and jump_ok
    return {"passed": bool(ok), "max_error": err, "identities": ids, "jumps": {str(k): v for k, v in jumps.items()},
            "summary": f"max err {err:.1e}; homogeneity {ids['homogeneity_max_rel_error']:.1e}; "
                       f"jumps {', '.join(f'q={k}:{v:.6f}' for k, v in jumps.items() if v is not None)}"}


def criterion_5() -> dict:
    t0 = time.perf_counter()
    expect_h = {"ex1": "pass", "ex2": "pass", "ex4": "pass", "sec3": "pass", "rem29": "H3"}
    expect_a = {"ex1": "fail", "ex2": "fail", "ex4": "fail", "sec3": "pass"}
    rows = {}
    ok = True
    for name in ("ex1", "ex2", "ex4", "sec3", "rem29"):
        m = builtin(name)
        hs = {k: v.verdict for k, v in check_all_H(m).items()}
        row = {"H": hs}
        if expect_h[name] == "pass":
            # an inconclusive sampling result is not a failure
            ok &= all(v != "fail" for v in hs.values())
        else:
            ok &= hs["H3"] == "fail"
        if name in expect_a:
            a = check_condition_A(m)
            row["A"] = a.verdict
            ok &= a.verdict == expect_a[name]
            if name == "sec3":
                lam = [s["lambda_hat"] - (abs(s["x"]) + 1.0) for s in a.estimates["samples"]]
                row["lambda_hat_excess"] = max(lam)
                ok &= max(lam) <= 1e-9
        rows[name] = row
    dt = time.perf_counter() - t0
    ok &= dt < 30.0
    return {"passed": bool(ok), "seconds": dt, "models": rows,
            "summary": f"{dt:.1f}s; " + "; ".join(f"{k} A={v.get('A', '-')}" for k, v in rows.items())}


def criterion_6(n: int = 1000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    held, rejected, tried_bad = 0, 0, 0
    accepted = 0
    while accepted < n:
        y, w, f = rng.normal(size=(3, 3))
        d = y - w
        if f @ d < d @ d and not np.allclose(f, d):
            sb = step_bound(y, w, f)
            held += sb.holds(0.99 * sb.h_max)
            accepted += 1
        else:
            tried_bad += 1
            try:
                step_bound(y, w, f)
            except NoValidStepError:
                rejected += 1
    ok = held == n and rejected == tried_bad and tried_bad > 0
    return {"passed": bool(ok), "held": held, "triples": n, "violating": tried_bad, "rejected": rejected,
            "summary": f"{held}/{n} hold at 0.99 h_max; {rejected}/{tried_bad} violators rejected"}


def criterion_7(n: int = 1000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    L = builtin("sec4-L")
    fixed = idem = nonexp = 0
    worst = 0.0
    for _ in range(n):
        t, x = rng.uniform(0.0, 1.0), rng.uniform(-2.0, 2.0)
        q = QSample(t, x, L)
        lo, hi = q.box()
        v = rng.uniform(lo, hi)
        eta = -float(q.L(v)) - rng.exponential()
        fixed += parametrize_theta(q, (v, eta)) == (v, eta)
        a = rng.normal(scale=2.0, size=2)
        b = a + rng.normal(scale=0.5, size=2)
        pa = parametrize_theta(q, a)
        idem += parametrize_theta(q, pa) == pa
        pb = parametrize_theta(q, b)
        gap = float(np.hypot(*np.subtract(pa, pb)) - np.hypot(*(a - b)))
        worst = max(worst, gap)
        nonexp += gap <= 1e-9
    ok = fixed == n and idem == n and nonexp == n
    return {"passed": bool(ok), "fixed_points": fixed, "idempotent": idem, "nonexpansive": nonexp,
            "worst_expansion": worst,
            "summary": f"fixed {fixed}/{n}; idempotent {idem}/{n}; nonexpansive {nonexp}/{n}"}


def criterion_8(epsilons=EPSILONS) -> dict:
    V = builtin("sec4-V")
    L = builtin("sec4-L")
    start = (START[0], START[1], float(sec4_V(*START)))
    rows = []
    for eps in epsilons:
        sol, dt = _timed(build_eps_approx, V, L, start, eps)
        au = audit_eps_approx(sol, V)
        rows.append({"epsilon": eps, "seconds": dt, "verdict": au["verdict"], "intervals": au["intervals"],
                     "certified_dist": au["worst"]["dist"], "sampled_dist": au["worst"]["dist_sampled"]})
    cert = [r["certified_dist"] for r in rows]
    mono = all(a >= b for a, b in zip(cert[:-1], cert[1:]))
    ok = mono and all(r["verdict"] == "pass" and r["certified_dist"] <= r["epsilon"] and r["seconds"] < 60.0
                      for r in rows)
    return {"passed": bool(ok), "runs": rows, "monotone": mono,
            "summary": "; ".join(f"eps={r['epsilon']}: dist {r['certified_dist']:.4f} in {r['seconds']:.1f}s"
                                 for r in rows)}


def criterion_9(starts: int = 20, seed: int = 0) -> dict:
    f, _ = sec4_field(201, 401)
    rng = np.random.default_rng(seed)
    worst_v, worst_field = np.inf, np.inf
    for _ in range(starts):
        j = int(rng.integers(0, 200))
        x0 = float(rng.uniform(-2.0, 2.0))
        tr = extract_trajectory(f, (f.times[j], x0))
        worst_v = min(worst_v, float(np.min(tr.u - sec4_V(tr.t, tr.x))))
        worst_field = min(worst_field, min(u - f.eval(t, x) for t, x, u in zip(tr.t, tr.x, tr.u)))
    return {"passed": bool(worst_v >= -1e-3), "worst_margin": worst_v, "worst_margin_vs_field": worst_field,
            "summary": f"worst u - V = {worst_v:.2e} (>= -1e-3); against the DP field {worst_field:.2e}"}


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}

TITLES = {1: "conjugate-pair fidelity", 2: "value-function reproduction", 3: "lsc-solution verification",
          4: "reduction exactness", 5: "condition-checker verdicts", 6: "step-bound property suite",
          7: "parametrization properties", 8: "viability construction", 9: "invariance echo"}


def line(k: int, res: dict) -> str:
    return f"criterion {k} ({TITLES[k]}): {'PASS' if res['passed'] else 'FAIL'} - {res['summary']}"


def run_all(which=None) -> dict:
    out = {}
    for k in which or CRITERIA:
        res, dt = _timed(CRITERIA[k])
        res["wall_seconds"] = dt
        out[k] = res
    return out
