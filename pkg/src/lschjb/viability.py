"""Euler broken lines that stay close to an epigraph, and invariance checks.

The approximate solution lives in (s, x, u) space, with s a copy of time
that may drift by at most T0 * eps.  Each interval moves along
f - (y - w), where w is the point of epi U nearest to the current node.  f
is an element of {1} x Q taken at a base point near w.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .extreal import GridFn, OutOfDomainError, jsonable
from .geometry import EpiSet, QSample, _polish_on_graph, dist_to_epi, parametrize_theta
from .valuefn import QSegmentError, Trajectory, ValueField, q_segment_violations


class NoValidStepError(ValueError):
    """<f, y - w> >= |y - w|^2: no step keeps the distance to w from growing."""


class BoundaryConditionFailure(RuntimeError):
    """The witness search found no velocity pointing back toward the epigraph."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# step-size rule

@dataclass(frozen=True)
class StepBound:
    y: tuple
    w: tuple
    f: tuple
    h_max: float

    def holds(self, h: float, rtol: float = 1e-12) -> bool:
        """|y + h (f - (y - w)) - w| <= |y - w| (up to rounding)."""
        y, w, f = (np.asarray(a, dtype=float) for a in (self.y, self.w, self.f))
        d = y - w
        lhs = np.linalg.norm(d + h * (f - d))
        return bool(lhs <= np.linalg.norm(d) * (1 + rtol) + rtol)


def step_bound(y, w, f) -> StepBound:
    y, w, f = (np.asarray(a, dtype=float) for a in (y, w, f))
    d = y - w
    dd = float(d @ d)
    fd = float(f @ d)
    if not fd < dd:
        raise NoValidStepError(f"<f, y-w> = {fd} is not below |y-w|^2 = {dd}")
    den = float((f - d) @ (f - d))
    if den == 0.0:
        raise NoValidStepError("f equals y - w")
    return StepBound(tuple(y), tuple(w), tuple(f), 2.0 * (dd - fd) / den)


# ---------------------------------------------------------------------------
# epsilon-approximate solutions

@dataclass
class EpsApproxSolution:
    epsilon: float
    t0: float
    T0: float
    nodes: np.ndarray            # y(t_j) rows (s, x, u), plus the end point
    times: np.ndarray            # t_0 < t_1 < ... < t_end
    f: np.ndarray                # f_j rows
    w: np.ndarray                # proximal points w_j
    wbar: np.ndarray             # base points with |wbar_j - w_j| <= eps
    on_epi: np.ndarray           # y(t_j) in epi U
    meta: dict = field(default_factory=dict)

    @property
    def intervals(self):
        return list(zip(self.times[:-1], self.times[1:]))

    def y(self, t: float) -> np.ndarray:
        """Broken-line value at time t."""
        j = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.f) - 1))
        dt = t - self.times[j]
        d = self.nodes[j] - self.w[j]
        return self.nodes[j] + dt * (self.f[j] - d)

    def to_dict(self) -> dict:
        iv = [{"t_j": float(a), "tau_j": float(b), "f_j": self.f[j].tolist(), "w_j": self.w[j].tolist(),
               "wbar_j": self.wbar[j].tolist(), "on_epi": bool(self.on_epi[j])}
              for j, (a, b) in enumerate(self.intervals)]
        nodes = [{"t": float(t), "s": float(y[0]), "x": float(y[1]), "u": float(y[2])}
                 for t, y in zip(self.times, self.nodes)]
        return jsonable({"epsilon": self.epsilon, "t0": self.t0, "T0": self.T0,
                         "intervals": iv, "nodes": nodes, "meta": self.meta})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EpsApproxSolution":
        iv = d["intervals"]
        nodes = np.array([[n["s"], n["x"], n["u"]] for n in d["nodes"]], dtype=float)
        times = np.array([n["t"] for n in d["nodes"]], dtype=float)
        return cls(float(d["epsilon"]), float(d["t0"]), float(d["T0"]), nodes, times,
                   np.array([i["f_j"] for i in iv], dtype=float).reshape(-1, 3),
                   np.array([i["w_j"] for i in iv], dtype=float).reshape(-1, 3),
                   np.array([i["wbar_j"] for i in iv], dtype=float).reshape(-1, 3),
                   np.array([i["on_epi"] for i in iv], dtype=bool), dict(d.get("meta", {})))


def window_limits(t0: float, T: float, CR: float) -> tuple[float, float]:
    """(eps_0, T_0) for a window starting at t0."""
    eps0 = (T - t0) / (2.0 * (1.0 + T))
    T0 = min(t0 + 1.0 / (1.0 + CR), t0 + 0.5 * (T - t0))
    return eps0, T0


def a_priori_radius(x0: float, c, t0: float, T: float, n: int = 257) -> float:
    """(|x0| + int c) exp(int c) over [t0, T]; c is a growth function of t."""
    if c is None:
        return abs(x0) + 2.0
    ts = np.linspace(t0, T, n)
    cs = np.array([float(c(s)) for s in ts])
    if not np.isfinite(cs).all():
        return math.inf
    ic = float(np.trapezoid(cs, ts)) if hasattr(np, "trapezoid") else float(np.trapz(cs, ts))
    return (abs(x0) + ic) * math.exp(ic)


def _epi(U, box):
    if isinstance(U, EpiSet):
        return U
    if isinstance(U, GridFn):
        return EpiSet(U)
    ev = getattr(U, "eval", U)
    return EpiSet(ev, box=box)


def _ladder(n_dirs: int = 8, n_radii: int = 8) -> np.ndarray:
    """64 unit-scale offsets: 8 directions x 8 radii halving toward the base."""
    ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    radii = 2.0 ** -np.arange(n_radii)
    return np.vstack([r * dirs for r in radii])


_LADDER = _ladder()


def _velocities(lagrangian, t, x, n: int):
    lo, hi = QSample(t, x, lagrangian).box()
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def find_witness(lagrangian, y, w, eps: float, T: float, R: float, velocity_nodes: int = 129):
    """Search base points near w and velocities for f with <f, y - w> < |y - w|^2.

    Returns (f, wbar, h_max, tried) or raises BoundaryConditionFailure.  The
    base point itself and 64 perturbed points within eps are scanned, and the
    smallest <f, y - w> over all of them is used.
    """
    y, w = np.asarray(y, float), np.asarray(w, float)
    n = y - w
    nn = float(n @ n)
    off = np.vstack([np.zeros((1, 2)), _LADDER]) * eps
    tk = np.clip(w[0] + off[:, 0], 0.0, T)
    xk = np.clip(w[1] + off[:, 1], -R, R)
    ok = np.hypot(tk - w[0], xk - w[1]) <= eps
    tk, xk = tk[ok], xk[ok]
    tried = len(tk)
    best = None
    boxes = np.array([QSample(a, b, lagrangian).box() for a, b in zip(tk, xk)])
    u = np.linspace(0.0, 1.0, velocity_nodes)
    vs = boxes[:, :1] + (boxes[:, 1:] - boxes[:, :1]) * u[None, :]
    lv = np.asarray(lagrangian.eval(tk[:, None], xk[:, None], vs), dtype=float) * np.ones(vs.shape)
    with np.errstate(invalid="ignore"):
        score = np.where(np.isfinite(lv), n[0] + vs * n[1] - lv * n[2], np.inf)
    if np.isfinite(score).any():
        i, k = np.unravel_index(int(np.argmin(score)), score.shape)
        best = (float(score[i, k]), np.array([1.0, vs[i, k], -lv[i, k]]), np.array([tk[i], xk[i], w[2]]))
    if best is not None and best[0] < nn:
        try:
            return best[1], best[2], step_bound(y, w, best[1]), tried
        except NoValidStepError:
            pass
    raise BoundaryConditionFailure(
        f"no witness at w = {w.tolist()} after {tried} base points",
        {"y": y.tolist(), "w": w.tolist(), "normal": n.tolist(),
         "best_score": None if best is None else best[0], "needed_below": nn,
         "base_points_tried": tried})


def _epi_velocity(lagrangian, epi, y, h_of, policy, velocity_nodes: int = 129):
    t, x, u = y
    if callable(policy):
        v = float(policy(t, x))
        lv = float(lagrangian.eval(t, x, v))
        if math.isfinite(lv):
            return np.array([1.0, v, -lv])
    if policy == "greedy":
        # one-step lookahead: the velocity whose end point sits highest inside epi U
        vs = _velocities(lagrangian, t, x, velocity_nodes)
        lv = np.asarray(lagrangian.eval(t, x, vs), dtype=float) * np.ones(vs.shape)
        fin = np.isfinite(lv)
        if fin.any():
            vs, lv = vs[fin], lv[fin]
            F = np.column_stack([np.ones_like(vs), vs, -lv])
            h = np.array([h_of(f) for f in F])
            te = np.minimum(t + h, epi.box[0][1])
            gap = (epi.U(te, x + h * vs) - (u - h * lv)) / h
            gap = np.where(np.isfinite(gap), gap, np.inf)
            k = int(np.argmin(gap))
            if math.isfinite(gap[k]):
                return F[k]
    v, eta = parametrize_theta(QSample(t, x, lagrangian), (0.0, 0.0))
    return np.array([1.0, v, eta])


def build_eps_approx(U, lagrangian, start, eps: float, T0: float | None = None, T: float | None = None,
                     policy="greedy", box=None, max_steps: int = 200000, snap: float = 0.01,
                     check_window: bool = True, full_search_every: int = 32) -> EpsApproxSolution:
    """Broken-line eps-approximate solution on [t0, T0) starting from a point of epi U.

    ``U`` is a 2-D GridFn over (t, x), a vectorized callable, or a value model
    with ``eval``.  At epigraph points the velocity comes from ``policy``: a
    callable ``policy(t, x)``, "greedy" (one-step lookahead on U), or None for
    the minimal-norm element of Q.  A node within ``snap * eps`` of epi U
    counts as an epigraph point; the step length keeps the distance budget.
    """
    T = float(T if T is not None else getattr(lagrangian, "horizon", 1.0))
    t0, x0, u0 = map(float, start)
    CR = float(lagrangian.known_CR(abs(x0) + 2.0)) if lagrangian.known_CR else 1.0
    eps0, T0max = window_limits(t0, T, CR)
    T0 = T0max if T0 is None else float(T0)
    if check_window:
        if not 0 < eps <= eps0 + 1e-15:
            raise ValueError(f"eps = {eps} outside (0, {eps0}]")
        if not t0 < T0 <= T0max + 1e-15:
            raise ValueError(f"T0 = {T0} outside ({t0}, {T0max}]")
    R = a_priori_radius(x0, lagrangian.known_c, t0, T)
    R = max(R, abs(x0) + 2.0) if math.isfinite(R) else abs(x0) + 2.0 + CR * (T - t0)
    epi = _epi(U, box if box is not None else ((0.0, T), (-R - 1.0, R + 1.0)))
    epi_tol = snap * eps
    if not epi.contains((t0, x0, u0), 1e-12):
        raise ValueError(f"start {start} is not in epi U")

    y = np.array([t0, x0, u0])
    t = t0
    times, nodes, F, W, WB, ON = [t0], [y.copy()], [], [], [], []
    witness_calls = 0
    prev_w = None
    while t < T0 - 1e-14:
        if len(F) >= max_steps:
            raise RuntimeError(f"step budget {max_steps} exhausted at t = {t}")
        if prev_w is not None and not ON[-1] and len(F) % full_search_every:
            # consecutive corrections move y very little: re-polish the last foot point
            w = np.asarray(_polish_on_graph(epi, y, prev_w), dtype=float)
        else:
            prox = dist_to_epi(epi, y, tol=epi_tol)
            w = np.asarray(prox.w, dtype=float)
            if prev_w is not None and prox.distance > 0 and np.linalg.norm(y - prev_w) < prox.distance:
                # the previous proximal point is still in epi U; keep whichever is closer
                w = prev_w
        remaining = T0 - t
        gap = float(np.linalg.norm(y - w))
        h_epi = lambda f: min((eps - gap) / (1.0 + np.linalg.norm(f)), remaining)
        if gap <= epi_tol:
            # w_j = y(t_j): the distance stays below gap + h |f| <= eps
            w = y.copy()
            yc = (min(max(y[0], 0.0), T), min(max(y[1], -R), R), y[2])
            f = _epi_velocity(lagrangian, epi, yc, h_epi, policy)
            h = h_epi(f)
            wbar, on = y.copy(), True
        else:
            f, wbar, sb, _ = find_witness(lagrangian, y, w, eps, T, R)
            witness_calls += 1
            h = min(0.5 * sb.h_max, eps / (1.0 + np.linalg.norm(f)), remaining)
            on = False
        y = y + h * (f - (y - w))
        t = t + h if remaining - h > 1e-14 else T0
        F.append(f), W.append(w), WB.append(wbar), ON.append(on)
        times.append(t), nodes.append(y.copy())
        prev_w = w
    return EpsApproxSolution(eps, t0, T0, np.array(nodes), np.array(times), np.array(F).reshape(-1, 3),
                             np.array(W).reshape(-1, 3), np.array(WB).reshape(-1, 3), np.array(ON, dtype=bool),
                             {"T": T, "C_R": CR, "radius": R, "witness_searches": witness_calls,
                              "intervals": len(F)})


def extend_to_horizon(U, lagrangian, start, eps: float, T: float | None = None, **kw) -> list:
    """Restart build_eps_approx from each window's end point until T is reached.

    Later windows use T_0 = min(t + 1/(1 + C_R), T) and skip the eps <= eps_0
    requirement, which degenerates as t approaches T.
    """
    T = float(T if T is not None else getattr(lagrangian, "horizon", 1.0))
    out = []
    t0, x0, u0 = map(float, start)
    sol = build_eps_approx(U, lagrangian, (t0, x0, u0), eps, T=T, **kw)
    out.append(sol)
    CR = sol.meta["C_R"]
    while sol.T0 < T - 1e-12:
        s, x, u = sol.nodes[-1]
        t = sol.T0
        epi = _epi(U, kw.get("box") or ((0.0, T), (-sol.meta["radius"] - 1, sol.meta["radius"] + 1)))
        # the broken line may end slightly off the epigraph; restart from its projection
        w = dist_to_epi(epi, (t, x, u)).w
        sol = build_eps_approx(U, lagrangian, w, eps, T0=min(t + 1.0 / (1.0 + CR), T), T=T,
                               check_window=False, **kw)
        out.append(sol)
    return out


def audit_eps_approx(sol: EpsApproxSolution, U, box=None, node_samples: int = 256, seed: int = 0,
                     tol: float = 1e-9) -> dict:
    """Recheck every defining property of ``sol`` from its stored data.

    The sup of dist(y(t), epi U) over an interval is certified by a point p of
    epi U: |y(t) - p| is convex in t, so its end-point values bound it.  p is
    w_j when w_j lies in epi U, otherwise a fresh nearest-point search from
    y(t_j).  Fresh searches at sampled nodes give an independent reading.
    """
    T = sol.meta.get("T", 1.0)
    R = sol.meta.get("radius", 10.0)
    epi = _epi(U, box if box is not None else ((0.0, T), (-R - 1.0, R + 1.0)))
    eps = sol.epsilon
    Y0, Y1 = sol.nodes[:-1], sol.nodes[1:]
    dt = np.diff(sol.times)[:, None]
    fails = {}

    def flag(name, mask):
        idx = np.flatnonzero(mask)
        if idx.size:
            fails[name] = idx[:20].tolist()

    pred = Y0 + dt * (sol.f - (Y0 - sol.w))
    err_i = np.max(np.abs(pred - Y1), axis=1)
    flag("condition_i", err_i > tol * (1 + np.max(np.abs(pred), axis=1)))

    Uw = epi.U(sol.w[:, 0], sol.w[:, 1])
    w_in = sol.w[:, 2] >= Uw - tol
    anchors = sol.w.copy()
    for j in np.flatnonzero(~w_in):
        anchors[j] = dist_to_epi(epi, Y0[j]).w
    cert = np.maximum(np.linalg.norm(Y0 - anchors, axis=1), np.linalg.norm(Y1 - anchors, axis=1))
    flag("dist", cert > eps + tol)
    flag("w_in_epi", ~w_in & ~sol.on_epi)

    lenf = dt[:, 0] * np.linalg.norm(sol.f, axis=1)
    flag("condition_iv", sol.on_epi & (lenf > eps + tol))
    gap = np.maximum(np.linalg.norm(sol.w - Y0, axis=1), np.linalg.norm(sol.w - Y1, axis=1))
    flag("w_gap", gap > eps + tol)
    wb = np.linalg.norm(sol.wbar - sol.w, axis=1)
    flag("wbar_gap", wb > eps + tol)
    drift = np.abs(sol.nodes[:, 0] - sol.times)
    flag("s_drift", drift > sol.T0 * eps + tol)

    rng = np.random.default_rng(seed)
    pick = np.unique(np.concatenate([np.flatnonzero(sol.on_epi), [len(sol.nodes) - 1],
                                     rng.choice(len(sol.nodes), min(node_samples, len(sol.nodes)),
                                                replace=False)]))
    sampled = max(dist_to_epi(epi, sol.nodes[i]).distance for i in pick)
    flag("dist_sampled", np.array([sampled > eps + tol]))
    worst = {"condition_i": float(err_i.max()), "dist": float(cert.max()), "dist_sampled": float(sampled),
             "condition_iv": float(lenf[sol.on_epi].max()) if sol.on_epi.any() else 0.0,
             "w_gap": float(gap.max()), "wbar_gap": float(wb.max()), "s_drift": float(drift.max())}
    return {"verdict": "pass" if not fails else "fail", "epsilon": eps, "worst": worst,
            "bounds": {"dist": eps, "condition_iv": eps, "w_gap": eps, "wbar_gap": eps, "s_drift": sol.T0 * eps},
            "failures": fails, "intervals": int(len(sol.f)), "nodes_sampled": int(len(pick))}


# ---------------------------------------------------------------------------
# invariance

def check_invariance(U, lagrangian, traj: Trajectory, tol: float = 1e-6, T: float | None = None,
                     normal_samples: int = 64, seed: int = 0, box=None, velocity_nodes: int = 33,
                     rule: str = "auto") -> dict:
    """u(t_i) >= U(t_i, x(t_i)) - tol along ``traj``, plus the normal-cone hypothesis.

    The hypothesis n^t + v n^x - n^u L(t,x,v) >= -tol is tested at proximal
    normals obtained by projecting random points below the graph near the
    trajectory.  If it fails, the margin check is still computed but the
    report marks it as not implied.  A ValueField is evaluated on its padded
    field, so paths leaving the reported window are still covered.
    """
    T = float(T if T is not None else getattr(lagrangian, "horizon", 1.0))
    bad = q_segment_violations(traj, lagrangian, rule=rule)
    if bad:
        raise QSegmentError(f"{len(bad)} segments leave Q; first: {bad[0]}")
    R = float(np.max(np.abs(traj.x))) + 1.0
    if isinstance(U, ValueField):
        field_ = U
        U = np.vectorize(field_.eval, otypes=[float])
        box = box or ((field_.config.time.lower, field_.config.time.upper),
                      (float(field_.padded_x[0]), float(field_.padded_x[-1])))
    elif isinstance(U, GridFn):
        g = U.grid
        if not all(g.contains((a, b), atol=1e-9) for a, b in zip(traj.t, traj.x)):
            raise OutOfDomainError("trajectory leaves the grid of U; pass the ValueField instead")
    epi = _epi(U, box if box is not None else ((0.0, T), (-R - 1.0, R + 1.0)))
    Ut = epi.U(traj.t, traj.x)
    if traj.t[-1] >= T - 1e-12 and traj.u[-1] < Ut[-1] - tol:
        raise ValueError(f"terminal condition fails: u(T) = {traj.u[-1]} < U(T, x(T)) = {Ut[-1]}")
    margins = traj.u - Ut
    k = int(np.argmin(margins))

    rng = np.random.default_rng(seed)
    hyp_worst = math.inf
    hyp_rows = []
    for _ in range(normal_samples):
        i = int(rng.integers(len(traj.t)))
        t = float(np.clip(traj.t[i] + rng.uniform(-0.02, 0.02), 1e-6, T))
        x = float(traj.x[i] + rng.uniform(-0.05, 0.05))
        ux = float(epi.U(t, x))
        if not math.isfinite(ux):
            continue
        y = (t, x, ux - rng.uniform(0.005, 0.05))
        prox = dist_to_epi(epi, y)
        if prox.distance <= 0:
            continue
        wt, wx, _ = prox.w
        if wt <= 0:
            continue
        nt, nx, nu = (a / prox.distance for a in prox.normal.direction)
        vs = _velocities(lagrangian, wt, wx, velocity_nodes)
        lv = np.asarray(lagrangian.eval(wt, wx, vs), dtype=float) * np.ones(vs.shape)
        fin = np.isfinite(lv)
        if not fin.any():
            continue
        val = nt + vs[fin] * nx - nu * lv[fin]
        m = float(val.min())
        hyp_rows.append({"w": [float(wt), float(wx)], "normal": [float(nt), float(nx), float(nu)], "min": m})
        hyp_worst = min(hyp_worst, m)
    hyp_ok = bool(hyp_worst >= -tol) if hyp_rows else None
    ok = bool(margins[k] >= -tol)
    return {"verdict": "pass" if ok else "fail", "worst_margin": float(margins[k]),
            "at": [float(traj.t[k]), float(traj.x[k])], "nodes": int(len(traj.t)),
            "hypothesis": {"verdict": {True: "pass", False: "fail", None: "inconclusive"}[hyp_ok],
                           "worst": hyp_worst if hyp_rows else None, "samples": len(hyp_rows)},
            "conclusion_implied": hyp_ok is True}
