"""Command-line front end: ``lschjb <command> [--config PATH] [--out DIR] ...``.

Every run writes its artifacts plus ``manifest.json`` (the resolved config and
a SHA-256 of each artifact) into the output directory.  Exit codes: 0 success,
2 a verified-failure verdict, 1 internal error, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from .extreal import Axis, jsonable
from .models import (HamiltonianModel, InvalidConfigError, LagrangianModel, SamplerConfig, UnknownModelError,
                     ValueModel, builtin, check_all_H, check_condition_A, conjugate_pair_fidelity,
                     lagrangian_slice, model_from_spec, sec4_V)
from .transform import ConjugatePlan, conjugate_slice

EXIT_OK, EXIT_INTERNAL, EXIT_FAILED, EXIT_USAGE = 0, 1, 2, 64

COMMANDS = ("conjugate", "solve-value", "check-conditions", "verify-solution", "reduce", "trajectory",
            "viability", "report-all")

DEFAULTS = {
    "conjugate": {"model": "ex1", "t": 0.5, "x": 2.0, "radius": 64.0, "count": 2001},
    "solve-value": {"model": "sec4-L", "terminal": "sec4-V", "grid": {"t": [0.0, 1.0, 201], "x": [-2.0, 2.0, 401]}},
    "check-conditions": {"model": "sec3", "sampler": {}},
    "verify-solution": {"value": "sec4-V", "lagrangian": "sec4-L", "scale": 1.0, "shift": 0.0,
                        "probes": {"t": [0.0, 1.0, 11], "x": [-2.0, 2.0, 21]}, "tol": 1e-6},
    "reduce": {"model": "sec3", "representation": "printed", "per_axis": 257,
               "probes": 200, "bj_q": [0.5, 1.0, 2.0]},
    "trajectory": {"model": "sec4-L", "terminal": "sec4-V", "grid": {"t": [0.0, 1.0, 201], "x": [-2.0, 2.0, 401]},
                   "start": [0.2, 0.9], "tol": 1e-3},
    "viability": {"value": "sec4-V", "lagrangian": "sec4-L", "start": [0.2, 0.9], "eps": 0.05},
    "report-all": {"criteria": [1, 2, 3, 4, 5, 6, 7, 8, 9]},
}


class UsageError(Exception):
    pass


class VerdictFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# config and output

def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def resolve_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        if cfg.pop("command", args.command) != args.command:
            raise UsageError("config command does not match the requested command")
    cfg = _deep_merge(DEFAULTS[args.command], cfg)
    cfg["seed"] = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.tol is not None:
        cfg["tol"] = args.tol
    for key in ("model", "t", "x", "eps", "start"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _load_model(ref):
    if isinstance(ref, dict):
        return model_from_spec(ref)
    p = Path(str(ref))
    if p.suffix == ".json" and p.exists():
        return model_from_spec(json.loads(p.read_text(encoding="utf-8")))
    return builtin(str(ref))


def _axis(spec, name):
    try:
        lo, hi, n = spec
        return Axis(float(lo), float(hi), int(n), name)
    except (TypeError, ValueError) as e:
        raise UsageError(f"grid axis {name} must be [lower, upper, count]") from e


def _dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str):
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        path.write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def binary(self, name: str, data: bytes):
        path = self.root / name
        path.write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# commands

def _terminal(ref):
    if ref == "sec4-V":
        return lambda x: sec4_V(1.0, x)
    if isinstance(ref, (int, float)):
        return lambda x, c=float(ref): np.full(np.shape(x), c)
    raise UsageError(f"unknown terminal data {ref!r}; use 'sec4-V' or a number")


def _solve(cfg):
    from .valuefn import DPConfig, solve_value
    lag = _load_model(cfg["model"])
    if isinstance(lag, HamiltonianModel):
        if lag.lagrangian is None:
            raise UsageError("solve-value needs a model with a registered Lagrangian")
        lag = lag.lagrangian
    g = cfg["grid"]
    return solve_value(DPConfig(_axis(g["t"], "t"), _axis(g["x"], "x"), lag, _terminal(cfg["terminal"])))


def cmd_conjugate(cfg, out: Outputs) -> dict:
    m = _load_model(cfg["model"])
    t, x = float(cfg["t"]), float(cfg["x"])
    if isinstance(m, LagrangianModel):
        lo, hi = m.domain(t, x)
        src = Axis(lo, hi, int(cfg["count"]), "v")
        plan = ConjugatePlan(src, Axis(-cfg["radius"], cfg["radius"], int(cfg["count"]), "p"), truncated=False)
        from .extreal import Grid, GridFn
        g = conjugate_slice(GridFn(Grid((src,)), m.eval(t, x, src.nodes())), plan)
    elif isinstance(m, HamiltonianModel):
        g = lagrangian_slice(m, t, x, float(cfg["radius"]), int(cfg["count"]))
    else:
        raise UsageError("conjugate needs a Hamiltonian or Lagrangian model")
    out.write("conjugate.csv", g.to_csv())
    summary = {"t": t, "x": x, "model": m.name}
    if isinstance(cfg["model"], str) and cfg["model"] in ("ex1", "ex2", "ex4", "sec3", "sec4-L"):
        summary["fidelity"] = conjugate_pair_fidelity(cfg["model"], points=((t, x),), count=int(cfg["count"]),
                                                      radius=float(cfg["radius"]))
    out.write("summary.json", _dump_json(summary))
    return summary


def cmd_solve_value(cfg, out: Outputs) -> dict:
    from .valuefn import closed_form_error
    f = _solve(cfg)
    out.write("value.csv", f.value.to_csv())
    # wall time would break byte-identical reruns
    summary = {"grid": cfg["grid"], "meta": {k: v for k, v in f.meta.items() if k != "seconds"}}
    if cfg["model"] == "sec4-L" and cfg["terminal"] == "sec4-V":
        summary["closed_form"] = closed_form_error(f, sec4_V, kink=lambda t: 2.0 * t - 1.0)
    out.write("summary.json", _dump_json(summary))
    return summary


def cmd_check_conditions(cfg, out: Outputs) -> dict:
    m = _load_model(cfg["model"])
    if not isinstance(m, HamiltonianModel):
        raise UsageError("check-conditions needs a Hamiltonian model")
    sampler = SamplerConfig.from_dict(dict(cfg.get("sampler") or {}, seed=cfg["seed"]))
    reps = check_all_H(m, sampler)
    reps["A"] = check_condition_A(m, None, sampler)
    res = {k: v.to_dict() for k, v in reps.items()}
    out.write("conditions.json", _dump_json({"model": m.name, "sampler": sampler.to_dict(), "reports": res}))
    return {"verdicts": {k: v.verdict for k, v in reps.items()}}


def cmd_verify_solution(cfg, out: Outputs) -> dict:
    from .valuefn import lagrangian_conjugate, scaled_hamiltonian, verify_lsc_solution
    V = _load_model(cfg["value"])
    L = _load_model(cfg["lagrangian"])
    if not isinstance(V, ValueModel) or not isinstance(L, LagrangianModel):
        raise UsageError("verify-solution needs a value model and a Lagrangian model")
    H = lagrangian_conjugate(L)
    if float(cfg["scale"]) != 1.0:
        H = scaled_hamiltonian(H, float(cfg["scale"]))
    shift = float(cfg["shift"])
    U = (lambda t, x: V.eval(t, x) + shift) if shift else V.eval
    pr = cfg["probes"]
    ts, xs = (np.linspace(*map(float, pr[k][:2]), int(pr[k][2])) for k in ("t", "x"))
    probes = [(t, x) for t in ts for x in xs]
    rep = verify_lsc_solution(U, H, V.terminal, probes, T=V.horizon, tol=float(cfg["tol"]))
    out.write("verification.json", _dump_json(rep.to_dict()))
    if rep.verdict == "fail":
        raise VerdictFailure(f"verification failed: {rep.summary}")
    return {"verdict": rep.verdict, "summary": rep.summary}


def cmd_reduce(cfg, out: Outputs) -> dict:
    from . import reduction as rd
    m = _load_model(cfg["model"])
    if cfg["representation"] == "printed":
        if m.name != "sec3":
            raise UsageError("the printed representation is registered for sec3 only")
        rep = rd.sec3_printed(int(cfg["per_axis"]))
    elif cfg["representation"] == "projection":
        rep = rd.build_representation(m, per_axis=int(cfg["per_axis"]), sampler={"seed": cfg["seed"]})
    else:
        raise UsageError("representation must be 'printed' or 'projection'")
    hb = rd.build_hbar(rep)
    rng = np.random.default_rng(cfg["seed"])
    n = int(cfg["probes"])
    rows = np.column_stack([rng.uniform(0, m.horizon, n), rng.uniform(-2, 2, n), rng.uniform(-1, 1, n),
                            rng.uniform(-4, 4, n), rng.uniform(-2, 2, n)])
    out.write("hbar.csv", hb.to_csv(rows))
    out.write("representation.csv", rep.to_csv([(0.5, 1.0), (0.5, 2.0)]))
    ids = rd.hbar_identities(hb, m, seed=cfg["seed"])
    bj = rd.barron_jensen_diagnostic(m, {"q": list(cfg["bj_q"])})
    res = {"tag": rep.tag, "size": rep.size, "identities": ids, "barron_jensen": bj, "audit": rep.audit}
    out.write("reduction.json", _dump_json(res))
    return {"identities": ids}


def cmd_trajectory(cfg, out: Outputs) -> dict:
    from .valuefn import extract_trajectory
    from .viability import check_invariance
    f = _solve(cfg)
    j = int(round((float(cfg["start"][0]) - f.config.time.lower) / f.config.time.spacing))
    tr = extract_trajectory(f, (f.times[j], float(cfg["start"][1])))
    out.write("trajectory.csv", _rows_csv(["t", "x", "u"], tr.to_rows()))
    res = {"start": [float(f.times[j]), float(cfg["start"][1])], "V_start": tr.meta["V_start"]}
    lag = _load_model(cfg["model"])
    lag = lag.lagrangian if isinstance(lag, HamiltonianModel) else lag
    res["invariance_field"] = check_invariance(f, lag, tr, tol=float(cfg["tol"]))
    if cfg["model"] == "sec4-L" and cfg["terminal"] == "sec4-V":
        res["invariance_closed_form"] = check_invariance(builtin("sec4-V"), lag, tr)
    out.write("trajectory.json", _dump_json(res))
    if res["invariance_field"]["verdict"] == "fail":
        raise VerdictFailure("trajectory falls below the value field")
    return {"worst_margin": res["invariance_field"]["worst_margin"]}


def cmd_viability(cfg, out: Outputs) -> dict:
    from .viability import audit_eps_approx, build_eps_approx
    V = _load_model(cfg["value"])
    L = _load_model(cfg["lagrangian"])
    t0, x0 = map(float, cfg["start"][:2])
    u0 = float(cfg["start"][2]) if len(cfg["start"]) > 2 else float(V.eval(t0, x0))
    sol = build_eps_approx(V, L, (t0, x0, u0), float(cfg["eps"]))
    au = audit_eps_approx(sol, V, seed=cfg["seed"])
    out.write("eps_approx.json", sol.to_json() + "\n")
    out.write("audit.json", _dump_json(au))
    if au["verdict"] != "pass":
        raise VerdictFailure("epsilon-approximate solution failed its audit")
    return {"verdict": au["verdict"], "worst": au["worst"]}


def cmd_report_all(cfg, out: Outputs, figures: bool = False) -> dict:
    from . import acceptance
    which = [int(k) for k in cfg["criteria"]]
    res = acceptance.run_all(which)
    lines = [acceptance.line(k, res[k]) for k in which]
    for ln in lines:
        print(ln)
    # timings differ between runs; keep them out of the artifact
    clean = {str(k): {a: b for a, b in v.items() if "seconds" not in a} for k, v in res.items()}
    for v in clean.values():
        for sub in ("pairs", "runs"):
            for row in v.get(sub, []):
                row.pop("seconds", None)
        v["summary"] = _strip_times(v["summary"])
    out.write("acceptance.json", _dump_json(clean))
    out.write("acceptance.txt", "\n".join(_strip_times(ln) for ln in lines) + "\n")
    if figures:
        from .plotting import render_report
        for name, data in render_report(out.root, seed=cfg["seed"]).items():
            out.files[name] = hashlib.sha256(data).hexdigest()
    if not all(v["passed"] for v in res.values()):
        raise VerdictFailure("some acceptance criteria failed")
    return {"passed": True}


def _strip_times(s: str) -> str:
    import re
    return re.sub(r"(\d+\.\d+s(; )?| in \d+\.\d+s)", "", s)


HANDLERS = {"conjugate": cmd_conjugate, "solve-value": cmd_solve_value, "check-conditions": cmd_check_conditions,
            "verify-solution": cmd_verify_solution, "reduce": cmd_reduce, "trajectory": cmd_trajectory,
            "viability": cmd_viability, "report-all": cmd_report_all}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lschjb", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default=f"out/{name}", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--tol", type=float)
        if name in ("conjugate", "solve-value", "check-conditions", "reduce", "trajectory"):
            p.add_argument("--model")
        if name == "conjugate":
            p.add_argument("--t", type=float)
            p.add_argument("--x", type=float)
        if name == "viability":
            p.add_argument("--eps", type=float)
        if name in ("trajectory", "viability"):
            p.add_argument("--start", type=float, nargs="+")
        if name == "report-all":
            p.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        cfg = resolve_config(args)
        out = Outputs(Path(args.out))
        handler = HANDLERS[args.command]
        status = EXIT_OK
        try:
            if args.command == "report-all":
                handler(cfg, out, figures=getattr(args, "figures", False))
            else:
                handler(cfg, out)
        except VerdictFailure as e:
            print(str(e), file=sys.stderr)
            status = EXIT_FAILED
        out.write("manifest.json", _dump_json({"command": args.command, "config": cfg, "exit_status": status,
                                               "artifacts": dict(sorted(out.files.items()))}))
        return status
    except (UsageError, InvalidConfigError, UnknownModelError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
