"""Backward dynamic programming for the value function and solution verifiers.

The recursion is

    V(t_j, x) = min_v  V(t_{j+1}, x + dt v) + cost(t_j, x, v, dt),   V(T, .) = g,

with linear interpolation in x (PLUS_INF absorbing) and ``cost`` the integral
of L along the straight segment.  Space is one-dimensional.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .extreal import PLUS_INF, Axis, Grid, GridFn, ImproperFunctionError, interp_many
from .geometry import OutsideDomainError, subderivative


class CoverageError(ValueError):
    """The velocity grid does not cover dom L(t,x,.)."""


class QSegmentError(ValueError):
    """A trajectory segment leaves the augmented dynamics Q."""


# ---------------------------------------------------------------------------
# segment costs

def segment_cost(lagrangian, t, x, v, dt, rule: str = "auto", tol: float = 1e-7, max_depth: int = 40):
    """Integral of L(t + s, x + s v, v) for s in [0, dt], elementwise over broadcast arrays.

    rule: "exact" (model hook), "midpoint" (L at t + dt/2 with the node x),
    "adaptive" (bisection of the segment-midpoint rule), or "auto" (exact when
    the model has a hook, adaptive otherwise).
    """
    t, x, v = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float), np.asarray(v, float))
    if rule == "auto":
        rule = "exact" if getattr(lagrangian, "segment_cost", None) is not None else "adaptive"
    if rule == "exact":
        hook = getattr(lagrangian, "segment_cost", None)
        if hook is None:
            raise ValueError(f"{lagrangian.name} has no exact segment cost")
        return np.asarray(hook(t, x, v, dt), dtype=float) * np.ones(t.shape)
    if rule == "midpoint":
        return dt * np.asarray(lagrangian.eval(t + 0.5 * dt, x, v), dtype=float) * np.ones(t.shape)
    if rule == "adaptive":
        return _adaptive(lagrangian, t.ravel(), x.ravel(), v.ravel(), dt, tol, max_depth).reshape(t.shape)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def _adaptive(lag, t, x, v, dt, tol, max_depth):
    out = np.zeros(t.size)
    idx = np.arange(t.size)
    a = np.zeros(t.size)
    b = np.full(t.size, dt)
    depth = np.zeros(t.size, dtype=int)

    def L(s, sel):
        return np.asarray(lag.eval(t[sel] + s, x[sel] + s * v[sel], v[sel]), dtype=float) * np.ones(sel.size)

    while idx.size:
        h = b - a
        m = 0.5 * (a + b)
        fl, fm, fr = L(a + 0.25 * h, idx), L(m, idx), L(b - 0.25 * h, idx)
        coarse = h * fm
        fine = 0.5 * h * (fl + fr)
        all_inf = np.isinf(fl) & np.isinf(fm) & np.isinf(fr)
        some_inf = (np.isinf(fl) | np.isinf(fm) | np.isinf(fr)) & ~all_inf
        with np.errstate(invalid="ignore"):
            err = np.abs(fine - coarse)
        ok = all_inf | (~some_inf & (err <= tol * dt * np.sqrt(h / dt))) | (depth >= max_depth)
        # Richardson-free: keep the finer estimate on accepted panels
        acc = np.where(all_inf, PLUS_INF, np.where(some_inf, PLUS_INF, fine))
        np.add.at(out, idx[ok], acc[ok])
        keep = ~ok
        idx, a, b, depth, m = idx[keep], a[keep], b[keep], depth[keep], m[keep]
        idx = np.concatenate([idx, idx])
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        depth = np.concatenate([depth, depth]) + 1
    return out


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class DPConfig:
    time: Axis
    space: Axis
    lagrangian: object
    terminal: object  # GridFn over the space axis, or callable g(x)
    velocity: Axis | None = None
    quadrature: str = "auto"
    padding: str | float = "auto"
    velocity_nodes: int = 129
    coverage_samples: int = 25

    def velocity_axis(self) -> Axis:
        if self.velocity is not None:
            return self.velocity
        lag = self.lagrangian
        ts, xs = np.linspace(self.time.lower, self.time.upper, 5), np.linspace(self.space.lower, self.space.upper, 5)
        if getattr(lag, "domain", None) is not None:
            # exact box from the registered domain descriptor
            lo = min(lag.domain(t, x)[0] for t in ts for x in xs)
            hi = max(lag.domain(t, x)[1] for t in ts for x in xs)
            if hi > lo:
                return Axis(float(lo), float(hi), self.velocity_nodes, "v")
        cr = getattr(lag, "known_CR", None)
        if cr is None:
            raise CoverageError("no domain descriptor or C_R bound to size the velocity box")
        R = max(abs(self.space.lower), abs(self.space.upper))
        r = 1.05 * float(cr(R))
        return Axis(-r, r, self.velocity_nodes, "v")

    def check_coverage(self, vax: Axis):
        lag = self.lagrangian
        ts = np.linspace(self.time.lower, self.time.upper, self.coverage_samples)
        xs = np.linspace(self.space.lower, self.space.upper, self.coverage_samples)
        eps = 1e-9 * max(1.0, vax.upper - vax.lower)
        for t in ts:
            for x in xs:
                if getattr(lag, "domain", None) is not None:
                    lo, hi = lag.domain(t, x)
                    if lo < vax.lower - eps or hi > vax.upper + eps:
                        raise CoverageError(f"dom L({t:.4g},{x:.4g},.) = [{lo}, {hi}] exceeds the velocity box")
                elif getattr(lag, "known_CR", None) is not None:
                    # finite-valued L: optimal velocities stay within the C_R bound
                    R = max(abs(self.space.lower), abs(self.space.upper))
                    r = float(lag.known_CR(R))
                    if -r < vax.lower - eps or r > vax.upper + eps:
                        raise CoverageError(f"velocity box [{vax.lower}, {vax.upper}] misses the C_R bound {r}")
                    return
                else:
                    out = np.array([vax.lower - 1e-3 * (1 + abs(vax.lower)), vax.upper + 1e-3 * (1 + vax.upper)])
                    if np.isfinite(np.asarray(lag.eval(t, x, out), dtype=float)).any():
                        raise CoverageError(f"L({t:.4g},{x:.4g},.) is finite outside the velocity box")


@dataclass
class ValueField:
    value: GridFn
    policy: np.ndarray
    config: DPConfig
    padded_value: np.ndarray
    padded_x: np.ndarray
    velocity: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.config.time.nodes()

    def padded_slice(self, j) -> GridFn:
        ax = Axis(float(self.padded_x[0]), float(self.padded_x[-1]), len(self.padded_x), "x")
        return GridFn(Grid((ax,)), self.padded_value[j])

    def eval(self, t, x) -> float:
        """Value at (t, x) from the padded field; t is snapped to the time grid."""
        j = int(round((t - self.config.time.lower) / self.config.time.spacing))
        j = min(max(j, 0), self.config.time.count - 1)
        return float(interp_many(self.padded_slice(j), np.array([x]), strict=True)[0])

    def policy_fn(self) -> GridFn:
        return GridFn(self.value.grid, np.where(np.isnan(self.policy), 0.0, self.policy))


def _pad_nodes(cfg: DPConfig, vmax: float) -> int:
    if cfg.padding == "none":
        return 0
    span = vmax * (cfg.time.upper - cfg.time.lower) if cfg.padding == "auto" else float(cfg.padding)
    return int(math.ceil(span / cfg.space.spacing - 1e-9))


def _terminal_values(cfg: DPConfig, xs: np.ndarray, npad: int):
    g = cfg.terminal
    if isinstance(g, GridFn):
        core = np.asarray(g.values, dtype=float)
        if core.shape != (cfg.space.count,):
            raise ValueError("terminal GridFn must live on the space axis")
        # edge extension outside the supplied data
        return np.concatenate([np.full(npad, core[0]), core, np.full(npad, core[-1])]), False
    return np.asarray(g(xs), dtype=float) * np.ones(len(xs)), True


def _ordered_velocities(vax: Axis) -> np.ndarray:
    v = vax.nodes()
    # argmin picks the first minimum, so this order implements the tie-break
    return v[np.lexsort((v, np.abs(v)))]


def backward_step(nxt: np.ndarray, xs: np.ndarray, t: float, dt: float, vs: np.ndarray,
                  costs: np.ndarray):
    """One DP step on the 1-D array ``nxt`` = V(t + dt, xs); returns (values, argmin index)."""
    dx = xs[1] - xs[0]
    n = len(xs)
    y = xs[:, None] + dt * vs[None, :]
    r = (y - xs[0]) / dx
    k = np.clip(np.floor(r + 1e-12).astype(int), 0, n - 2)
    w = np.clip(r - k, 0.0, 1.0)
    g0, g1 = nxt[k], nxt[k + 1]
    inf = (np.isposinf(g0) & (w < 1.0)) | (np.isposinf(g1) & (w > 0.0))
    val = np.where(np.isfinite(g0), g0, 0.0) * (1.0 - w) + np.where(np.isfinite(g1), g1, 0.0) * w
    val = np.where(inf, PLUS_INF, val)
    outside = (r < -1e-9) | (r > n - 1 + 1e-9)
    val = np.where(outside, PLUS_INF, val)
    tot = val + costs
    j = np.argmin(tot, axis=1)
    return tot[np.arange(n), j], j


def solve_value(cfg: DPConfig) -> ValueField:
    """Backward DP on the configured grids; see the module docstring."""
    t_start = time.perf_counter()
    vax = cfg.velocity_axis()
    cfg.check_coverage(vax)
    vs = _ordered_velocities(vax)
    vmax = float(np.max(np.abs(vs)))
    npad = _pad_nodes(cfg, vmax)
    dx = cfg.space.spacing
    xs = cfg.space.lower + dx * np.arange(-npad, cfg.space.count + npad)
    ts = cfg.time.nodes()
    dt = cfg.time.spacing
    gvals, trusted_pad = _terminal_values(cfg, xs, npad)
    if np.isneginf(gvals).any() or not np.isfinite(gvals).any():
        raise ImproperFunctionError("terminal data must be proper")
    nt, nX = len(ts), len(xs)
    V = np.empty((nt, nX))
    pol = np.full((nt, nX), np.nan)
    V[-1] = gvals
    for j in range(nt - 2, -1, -1):
        c = segment_cost(cfg.lagrangian, ts[j], xs[:, None], vs[None, :], dt, cfg.quadrature)
        V[j], arg = backward_step(V[j + 1], xs, ts[j], dt, vs, c)
        pol[j] = np.where(np.isfinite(V[j]), vs[arg], np.nan)
    win = slice(npad, npad + cfg.space.count)
    grid = Grid((Axis(cfg.time.lower, cfg.time.upper, cfg.time.count, "t"),
                 Axis(cfg.space.lower, cfg.space.upper, cfg.space.count, "x")))
    vf = GridFn(grid, V[:, win], {"quadrature": _rule_name(cfg), "padding_nodes": npad,
                                  "velocity": {"lower": vax.lower, "upper": vax.upper, "count": vax.count}})
    meta = {"seconds": time.perf_counter() - t_start, "padding_nodes": npad,
            "padded_terminal_exact": trusted_pad, "quadrature": _rule_name(cfg)}
    return ValueField(vf, pol[:, win], cfg, V, xs, vs, meta)


def _rule_name(cfg):
    if cfg.quadrature != "auto":
        return cfg.quadrature
    return "exact" if getattr(cfg.lagrangian, "segment_cost", None) is not None else "adaptive"


# ---------------------------------------------------------------------------
# trajectories

@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t, self.x, self.u = (np.asarray(a, dtype=float) for a in (self.t, self.x, self.u))
        if not (len(self.t) == len(self.x) == len(self.u)) or len(self.t) < 1:
            raise ValueError("trajectory arrays must have equal, positive length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def at(self, s: float):
        return (float(np.interp(s, self.t, self.x)), float(np.interp(s, self.t, self.u)))

    def lifted(self, c: float) -> "Trajectory":
        return Trajectory(self.t, self.x, self.u + c, dict(self.meta))

    def to_rows(self):
        return [[repr(float(a)), repr(float(b)), repr(float(c))] for a, b, c in zip(self.t, self.x, self.u)]

    def to_dict(self):
        return {"t": self.t.tolist(), "x": self.x.tolist(), "u": self.u.tolist(), "meta": self.meta}


def extract_trajectory(field_: ValueField, start) -> Trajectory:
    """Forward path from (t0, x0) by one-step lookahead against the padded value field.

    The u component accumulates the actual segment costs backward from
    g(x(T)), so u(t0) is the cost of the discrete path, to be compared with
    V(t0, x0).
    """
    cfg = field_.config
    t0, x0 = map(float, start)
    ts = cfg.time.nodes()
    j0 = int(round((t0 - cfg.time.lower) / cfg.time.spacing))
    if j0 < 0 or j0 >= len(ts) or abs(ts[j0] - t0) > 1e-9 * max(1.0, abs(t0)):
        raise OutsideDomainError(f"start time {t0} is not a time node")
    if not (field_.padded_x[0] <= x0 <= field_.padded_x[-1]):
        raise OutsideDomainError(f"start state {x0} is outside the computed field")
    if not np.isfinite(field_.eval(t0, x0)):
        raise OutsideDomainError(f"({t0}, {x0}) is not in dom V")
    dt = cfg.time.spacing
    xs, vs = [x0], []
    costs = []
    x = x0
    for j in range(j0, len(ts) - 1):
        c = segment_cost(cfg.lagrangian, ts[j], np.array([x]), field_.velocity[None, :], dt, cfg.quadrature)[0]
        nxt = field_.padded_value[j + 1]
        y = x + dt * field_.velocity
        vals = interp_many(field_.padded_slice(j + 1), y, strict=False)
        out = (y < field_.padded_x[0]) | (y > field_.padded_x[-1])
        tot = np.where(out, PLUS_INF, vals + c)
        k = int(np.argmin(tot))
        v = float(field_.velocity[k])
        vs.append(v)
        costs.append(float(c[k]))
        x = x + dt * v
        xs.append(x)
        del nxt
    g = cfg.terminal
    gT = float(g(np.array([x]))[0]) if callable(g) and not isinstance(g, GridFn) else \
        float(interp_many(g, np.array([x]), strict=False)[0])
    u = np.empty(len(xs))
    u[-1] = gT
    for i in range(len(costs) - 1, -1, -1):
        u[i] = u[i + 1] + costs[i]
    return Trajectory(ts[j0:], np.array(xs), u, {"velocity": vs, "segment_cost": costs,
                                                  "V_start": field_.eval(t0, x0)})


def q_segment_violations(traj: Trajectory, lagrangian, rule: str = "auto", tol: float = 1e-9):
    """Segments whose (dx/dt, du/dt) is not in Q on average along the segment.

    A segment passes when its velocity lies in dom L and du/dt is at most minus
    the segment average of L.
    """
    bad = []
    for i in range(len(traj.t) - 1):
        dt = traj.t[i + 1] - traj.t[i]
        v = (traj.x[i + 1] - traj.x[i]) / dt
        dom = getattr(lagrangian, "domain", None)
        if dom is not None:
            # forgive the rounding in recovering v from the nodes
            lo, hi = dom(traj.t[i], traj.x[i])
            if lo - 1e-9 * (1 + abs(lo)) <= v <= hi + 1e-9 * (1 + abs(hi)):
                v = min(max(v, lo), hi)
        eta = (traj.u[i + 1] - traj.u[i]) / dt
        c = float(segment_cost(lagrangian, traj.t[i], traj.x[i], v, dt, rule))
        avg = c / dt
        if not math.isfinite(avg) or eta > -avg + tol * (1.0 + abs(avg)):
            bad.append({"segment": i, "t": float(traj.t[i]), "v": float(v), "eta": float(eta),
                        "minus_avg_L": -avg})
    return bad


# ---------------------------------------------------------------------------
# verification

@dataclass
class VerificationReport:
    verdict: str
    rows: list
    summary: dict

    def to_dict(self):
        return {"verdict": self.verdict, "rows": self.rows, "summary": self.summary}


def _as_callable(U):
    if isinstance(U, GridFn):
        return lambda t, x: interp_many(U, np.column_stack([np.ravel(t) * np.ones(np.size(x)), np.ravel(x)]),
                                        strict=False).reshape(np.shape(x))
    return U


def _candidate_subgradients(U, t, x, spread: float = 0.5, n: int = 9, h: float = 1e-4):
    # one-sided slopes: a central difference across a jump is meaningless
    Uc = _as_callable(U)
    u0 = float(Uc(t, x))
    st = [(float(Uc(t + s * h, x)) - u0) / (s * h) for s in (1, -1)]
    sx = [(float(Uc(t, x + s * h)) - u0) / (s * h) for s in (1, -1)]
    offs = np.linspace(-spread, spread, n)
    out = []
    for ft in st:
        for fx in sx:
            if not (math.isfinite(ft) and math.isfinite(fx)):
                continue
            out.extend((ft + a, fx + b) for a in offs for b in offs)
    return out


def verify_lsc_solution(U, H, g, probes, T: float | None = None, tol: float = 1e-6,
                        terminal_nodes=None, probe_tol: float = 1e-2) -> VerificationReport:
    """Check both subgradient inequalities of a lower semicontinuous solution and U(T,.) = g.

    ``U`` is a closed-form value model (with an analytic ``gradient``), a plain
    callable, or a 2-D GridFn.  For models without a usable gradient the
    candidate subgradients come from a net around a finite-difference slope,
    filtered by a subdifferential probe.  Those candidates are only accurate to
    the probe resolution, so their rows are judged against ``probe_tol``.
    """
    from .geometry import unit_directions
    dirs = unit_directions(2, 64)
    T = T if T is not None else getattr(U, "horizon", 1.0)
    Uc = _as_callable(U)
    rows = []
    worst = {"analytic": 0.0, "probe": 0.0}
    checked = 0
    for (t, x) in probes:
        t, x = float(t), float(x)
        u = float(np.asarray(Uc(t, x)))
        if not math.isfinite(u):
            continue
        grads = None
        grad_fn = getattr(U, "gradient", None)
        if grad_fn is not None:
            g0 = grad_fn(t, x)
            grads = [g0] if g0 is not None else None
            source = "analytic"
        if grads is None:
            source = "probe"
            grads = _probe_filter(Uc, t, x, _candidate_subgradients(U, t, x), dirs)
        lim = tol if source == "analytic" else probe_tol
        for pt, px in grads:
            r = float(-pt + H.eval(t, x, -px))
            if t < T:
                m = r
                rows.append({"probe": [t, x], "quantity": "-p_t+H(t,x,-p_x) >= 0", "margin": m,
                             "verdict": "pass" if m >= -lim else "fail", "source": source})
                worst[source] = max(worst[source], -m)
            if t > 0:
                m = -r
                rows.append({"probe": [t, x], "quantity": "-p_t+H(t,x,-p_x) <= 0", "margin": m,
                             "verdict": "pass" if m >= -lim else "fail", "source": source})
                worst[source] = max(worst[source], -m)
            checked += 1
    xs = np.asarray(terminal_nodes if terminal_nodes is not None else np.linspace(-2, 2, 401), dtype=float)
    uT = np.asarray(Uc(np.full(xs.shape, T), xs), dtype=float)
    gT = np.asarray(g(xs) if callable(g) else interp_many(g, xs, strict=False), dtype=float)
    both_inf = np.isposinf(uT) & np.isposinf(gT)
    term_err = float(np.max(np.where(both_inf, 0.0, np.abs(uT - gT))))
    rows.append({"probe": "terminal", "quantity": "max |U(T,.) - g|", "margin": -term_err,
                 "verdict": "pass" if term_err <= tol else "fail"})
    if checked == 0:
        verdict = "inconclusive"
    else:
        ok = worst["analytic"] <= tol and worst["probe"] <= probe_tol and term_err <= tol
        verdict = "pass" if ok else "fail"
    return VerificationReport(verdict, rows, {"max_violation": worst["analytic"],
                                              "max_violation_probe": worst["probe"],
                                              "terminal_error": term_err,
                                              "subgradients_checked": checked})


def _probe_filter(Uc, t, x, candidates, dirs, tol: float = 1e-3):
    """Keep candidates p with <p, d> <= dU(t,x)(d) + tol on every direction d."""
    if not candidates:
        return []
    f = _vec(Uc)
    ests = np.array([subderivative(f, (t, x), d).value for d in dirs])
    keep = ~np.isnan(ests)
    dirs, ests = dirs[keep], ests[keep]
    P = np.asarray(candidates, dtype=float)
    bound = ests + tol * np.where(np.isfinite(ests), 1.0 + np.abs(ests), 1.0)
    ok = np.all(P @ dirs.T <= bound[None, :], axis=1)
    return [tuple(c) for c in P[ok]]


def _satisfies(dv: float, rhs: float, tol: float):
    """dv <= rhs + tol in the extended reals; returns (ok, margin rhs - dv)."""
    if math.isnan(dv):
        return False, math.nan
    if dv == -PLUS_INF:
        return True, 0.0 if rhs == -PLUS_INF else PLUS_INF
    if rhs == PLUS_INF:
        return True, 0.0 if dv == PLUS_INF else PLUS_INF
    if dv == PLUS_INF or rhs == -PLUS_INF:
        return False, -PLUS_INF
    return dv <= rhs + tol, rhs - dv


def verify_thm52_54(V, lagrangian, probes, velocity: Axis | None = None, tol: float = 1e-3,
                    T: float | None = None) -> VerificationReport:
    """Directional inequalities satisfied by value functions.

    Forward (existence): some grid v0 with dV(t,x)(1, v0) <= -L(t,x,v0); the
    search ranges over the whole velocity grid, inside dom L or not.
    Backward (for all v in dom L on the grid): dV(t,x)(-1, -v) <= L(t,x,v);
    skipped at t = 0 where the backward direction leaves the time interval.
    """
    T = T if T is not None else getattr(V, "horizon", 1.0)
    vax = velocity or Axis(-2.0, 2.0, 129, "v")
    vgrid = vax.nodes()
    vgrid = vgrid[np.lexsort((vgrid, np.abs(vgrid)))]
    Uc = V.eval if isinstance(V, ValueField) else V
    rows = []
    unstable = 0
    worst_back = PLUS_INF
    forward_ok = True
    for (t, x) in probes:
        t, x = float(t), float(x)
        if t < T:
            found = None
            for v in vgrid:
                est = subderivative(_vec(Uc), (t, x), (1.0, v))
                lv = float(lagrangian.eval(t, x, v))
                ok, margin = _satisfies(est.value, -lv, tol)
                if ok:
                    found = (float(v), est, margin, lv)
                    break
            if found is None:
                forward_ok = False
                rows.append({"probe": [t, x], "quantity": "exists v0: dV(1,v0) <= -L(v0)", "margin": None,
                             "verdict": "fail"})
            else:
                v0, est, margin, lv = found
                rows.append({"probe": [t, x], "quantity": "exists v0: dV(1,v0) <= -L(v0)", "margin": margin,
                             "verdict": "pass", "v0": v0, "dV": est.value, "L": lv,
                             "v0_in_dom": bool(math.isfinite(lv)), "trend": est.trend})
        if t > 0:
            worst = PLUS_INF
            wv = None
            for v in vgrid:
                lv = float(lagrangian.eval(t, x, v))
                if not math.isfinite(lv):
                    continue
                est = subderivative(_vec(Uc), (t, x), (-1.0, -v))
                if not est.stable:
                    unstable += 1
                ok, margin = _satisfies(est.value, lv, tol)
                if margin < worst:
                    worst, wv = margin, float(v)
            worst_back = min(worst_back, worst)
            rows.append({"probe": [t, x], "quantity": "all v in dom L: dV(-1,-v) <= L(v)", "margin": worst,
                         "verdict": "pass" if worst >= -tol else "fail", "worst_v": wv})
    back_ok = worst_back >= -tol
    verdict = "pass" if forward_ok and back_ok else "fail"
    if unstable and verdict == "pass" and worst_back < 0:
        verdict = "inconclusive"
    return VerificationReport(verdict, rows, {"worst_backward_margin": worst_back,
                                              "forward_witnesses_found": forward_ok,
                                              "unstable_estimates": unstable})


def _vec(U):
    def f(t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        try:
            return np.asarray(U(t, x), dtype=float) * np.ones(t.shape)
        except TypeError:
            return np.array([U(a, b) for a, b in zip(t.ravel(), x.ravel())]).reshape(t.shape)
    return f


def lagrangian_conjugate(lagrangian, velocity: Axis | None = None, name: str | None = None):
    """Hamiltonian H(t,x,p) = max over a velocity grid of v p - L(t,x,v)."""
    from .models import HamiltonianModel
    vax = velocity or Axis(-2.0, 2.0, 129, "v")
    vg = vax.nodes()

    def ev(t, x, p):
        t, x, p = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float), np.asarray(p, float))
        tf, xf, pf = t.ravel(), x.ravel(), p.ravel()
        Lv = np.asarray(lagrangian.eval(tf[:, None], xf[:, None], vg[None, :]), dtype=float)
        Lv = Lv * np.ones((tf.size, vg.size))
        sc = np.where(np.isfinite(Lv), vg[None, :] * pf[:, None] - np.where(np.isfinite(Lv), Lv, 0.0), -PLUS_INF)
        return sc.max(axis=1).reshape(t.shape)

    return HamiltonianModel(name or f"conj({lagrangian.name})", 1, lagrangian.horizon, ev, lagrangian=lagrangian)


def scaled_hamiltonian(H, factor: float):
    from dataclasses import replace
    f = H.eval
    return replace(H, name=f"{factor}*{H.name}", eval=lambda t, x, p: factor * np.asarray(f(t, x, p)))


def closed_form_error(field_: ValueField, exact: Callable, kink: Callable | None = None,
                      region: str = "interior") -> dict:
    """Sup error of a computed field against a closed form on the window interior.

    ``kink(t)`` gives the x-location of a line to exclude by one cell; region
    "x>=t" restricts further to nodes on or right of the diagonal.
    """
    ts = field_.value.grid.nodes(0)
    xs = field_.value.grid.nodes(1)
    TT, XX = np.meshgrid(ts, xs, indexing="ij")
    dx = xs[1] - xs[0]
    mask = (XX > xs[0] + 0.5 * dx) & (XX < xs[-1] - 0.5 * dx)
    if kink is not None:
        mask &= np.abs(XX - kink(TT)) > dx * (1 + 1e-9)
    if region == "x>=t":
        mask &= XX >= TT
    err = np.abs(field_.value.values - exact(TT, XX))
    err = np.where(mask, err, 0.0)
    k = np.unravel_index(np.argmax(err), err.shape)
    return {"sup_error": float(err[k]), "at": [float(TT[k]), float(XX[k])], "nodes": int(mask.sum())}
