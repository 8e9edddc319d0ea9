"""Epigraphs, the set-valued map Q, subderivatives, Steiner points and Theta.

Q(t,x) = {(v, eta) : eta <= -L(t,x,v)} is handled through its defining
Lagrangian slice.  Functions over (t, x) may be given either as a 2-D
:class:`GridFn` or as a vectorized callable ``U(t, x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import norm, qmc

from .extreal import PLUS_INF, GridFn, interp_many


class EmptySetError(ValueError):
    pass


class OutsideDomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Q(t, x)

@dataclass(frozen=True)
class QSample:
    t: float
    x: float
    lagrangian: object
    velocity_box: tuple[float, float] | None = None

    def box(self) -> tuple[float, float]:
        if self.velocity_box is not None:
            return tuple(map(float, self.velocity_box))
        dom = getattr(self.lagrangian, "domain", None)
        if dom is not None:
            lo, hi = dom(self.t, self.x)
            return float(lo), float(hi)
        cr = getattr(self.lagrangian, "known_CR", None)
        r = cr(abs(self.x) + 1.0) if cr else 1.0
        return -1.05 * r, 1.05 * r

    def L(self, v):
        return np.asarray(self.lagrangian.eval(self.t, self.x, v), dtype=float)


def q_membership(q: QSample, v, eta, tol: float = 0.0) -> bool:
    """True iff L(t,x,v) is finite and eta <= -L(t,x,v) + tol."""
    lv = float(q.L(float(v)))
    return bool(math.isfinite(lv) and eta <= -lv + tol)


# ---------------------------------------------------------------------------
# epigraphs and proximal points

@dataclass(frozen=True)
class EpiSet:
    """Epigraph of U over a (t, x) box.

    ``base`` is a 2-D GridFn, or a callable with ``box`` and a coarse search
    ``resolution`` for the nearest-point search.
    """

    base: object
    box: tuple | None = None
    resolution: tuple[int, int] = (201, 401)

    def __post_init__(self):
        if isinstance(self.base, GridFn):
            if self.base.grid.ndim != 2:
                raise ValueError("EpiSet expects a function of (t, x)")
            if not np.isfinite(self.base.values).any():
                raise EmptySetError("epigraph of an identically PLUS_INF function is empty")
            ax = self.base.grid.axes
            object.__setattr__(self, "box", ((ax[0].lower, ax[0].upper), (ax[1].lower, ax[1].upper)))
        elif self.box is None:
            raise ValueError("callable base needs a (t, x) box")

    def U(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if isinstance(self.base, GridFn):
            tt, xx = np.broadcast_arrays(t, x)
            return interp_many(self.base, np.column_stack([tt.ravel(), xx.ravel()]), strict=False).reshape(tt.shape)
        return np.asarray(self.base(t, x), dtype=float) * np.ones(np.broadcast(t, x).shape)

    def inside(self, t, x) -> bool:
        (t0, t1), (x0, x1) = self.box
        return t0 - 1e-12 <= t <= t1 + 1e-12 and x0 - 1e-12 <= x <= x1 + 1e-12

    def contains(self, y, tol: float = 1e-12) -> bool:
        t, x, u = map(float, y)
        return self.inside(t, x) and u >= float(self.U(t, x)) - tol

    def search_nodes(self):
        if isinstance(self.base, GridFn):
            return self.base.grid.nodes(0), self.base.grid.nodes(1)
        (t0, t1), (x0, x1) = self.box
        return np.linspace(t0, t1, self.resolution[0]), np.linspace(x0, x1, self.resolution[1])


@dataclass(frozen=True)
class ConeProbe:
    base: tuple
    direction: tuple

    @property
    def accepted(self) -> bool:
        return self.direction[-1] <= 0.0


@dataclass(frozen=True)
class Proximal:
    distance: float
    w: tuple
    normal: ConeProbe


def _dist2(e: EpiSet, t, x, y):
    U = e.U(t, x)
    lift = np.maximum(U - y[2], 0.0)
    return (t - y[0]) ** 2 + (x - y[1]) ** 2 + lift ** 2, U


def _polish_on_graph(e: EpiSet, y, w, iters: int = 6, fd: float = 1e-7):
    """Gauss-Newton steps for the foot point on a locally smooth graph.

    Each step solves the 3x2 linearized least-squares problem; it only keeps
    iterates that reduce the distance, so kinks and jumps leave w unchanged.
    """
    y = np.asarray(y, dtype=float)
    (t0, t1), (x0, x1) = e.box
    t, x = w[0], w[1]
    best = np.asarray(w, dtype=float)
    cur = float(np.sum((best - y) ** 2))
    for _ in range(iters):
        U3 = e.U(np.array([t, t + fd, t]), np.array([x, x, x + fd]))
        if not np.isfinite(U3).all():
            break
        gt, gx = (U3[1:] - U3[0]) / fd
        rt, rx, ru = t - y[0], x - y[1], U3[0] - y[2]
        # normal equations of the 3x2 system [I; g] step = -r
        a, b, c = 1.0 + gt * gt, gt * gx, 1.0 + gx * gx
        bt, bx = -(rt + gt * ru), -(rx + gx * ru)
        det = a * c - b * b
        step = ((c * bt - b * bx) / det, (a * bx - b * bt) / det)
        tn = min(max(t + step[0], t0), t1)
        xn = min(max(x + step[1], x0), x1)
        un = float(e.U(tn, xn))
        if not math.isfinite(un) or un < y[2]:
            break
        cand = np.array([tn, xn, un])
        d2 = float(np.sum((cand - y) ** 2))
        if d2 >= cur:
            break
        done = cur - d2 <= 1e-15 * cur
        best, cur, t, x = cand, d2, tn, xn
        if done:
            break
    return tuple(float(c) for c in best)


def dist_to_epi(e: EpiSet, y, tol: float = 1e-12, refine: int = 4, polish: bool = True) -> Proximal:
    """Distance from y = (t, x, u) to epi U and a proximal point w.

    Search: all search nodes inside the ball of radius U(t,x) - u (the vertical
    drop is always admissible), then repeated local sub-sampling around the
    best candidate on the interpolant.  ``w - y`` has a non-negative u part so
    the returned normal y - w always has n^u <= 0.
    """
    y = tuple(float(c) for c in y)
    t, x, u = y
    if e.contains(y, tol):
        return Proximal(0.0, y, ConeProbe(y, (0.0, 0.0, 0.0)))
    (t0, t1), (x0, x1) = e.box
    tc, xc = min(max(t, t0), t1), min(max(x, x0), x1)
    Utc = float(e.U(tc, xc))
    best_w = None
    if math.isfinite(Utc):
        best_w = (tc, xc, max(u, Utc))
        r = math.sqrt((tc - t) ** 2 + (xc - x) ** 2 + (best_w[2] - u) ** 2)
    else:
        r = math.inf
    ts, xs = e.search_nodes()
    mt = (ts >= t - r) & (ts <= t + r)
    mx = (xs >= x - r) & (xs <= x + r)
    if mt.any() and mx.any():
        T_, X_ = np.meshgrid(ts[mt], xs[mx], indexing="ij")
        d2, Uv = _dist2(e, T_, X_, y)
        k = np.unravel_index(np.argmin(d2), d2.shape)
        if math.isfinite(d2[k]) and (best_w is None or d2[k] < r * r):
            best_w = (float(T_[k]), float(X_[k]), max(u, float(Uv[k])))
    if best_w is None:
        raise EmptySetError("no finite epigraph point found")
    ht, hx = ts[1] - ts[0], xs[1] - xs[0]
    for _ in range(refine):
        tt = np.clip(best_w[0] + np.linspace(-ht, ht, 21), t0, t1)
        xx = np.clip(best_w[1] + np.linspace(-hx, hx, 21), x0, x1)
        T_, X_ = np.meshgrid(tt, xx, indexing="ij")
        d2, Uv = _dist2(e, T_, X_, y)
        k = np.unravel_index(np.argmin(d2), d2.shape)
        cur = (best_w[0] - t) ** 2 + (best_w[1] - x) ** 2 + (best_w[2] - u) ** 2
        if d2[k] < cur:
            best_w = (float(T_[k]), float(X_[k]), max(u, float(Uv[k])))
        ht, hx = ht / 10.0, hx / 10.0
    if polish and best_w[2] > u:
        best_w = _polish_on_graph(e, y, best_w)
    dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(y, best_w)))
    n = tuple(a - b for a, b in zip(y, best_w))
    return Proximal(dist, best_w, ConeProbe(best_w, n))


# ---------------------------------------------------------------------------
# subderivatives

@dataclass
class SubderivativeEstimate:
    value: float
    levels: list
    h: list
    stable: bool
    trend: str  # "finite" | "plus_inf" | "minus_inf"
    min_observed: float = math.nan

    def to_dict(self):
        return {"value": self.value, "levels": self.levels, "h": self.h, "stable": self.stable,
                "trend": self.trend, "min_observed": self.min_observed}


def _evaluator(U):
    if isinstance(U, GridFn):
        g = U.grid
        lo = np.array([a.lower for a in g.axes])
        hi = np.array([a.upper for a in g.axes])

        def ev(P):
            P = np.atleast_2d(P)
            inside = np.all((P >= lo - 1e-12) & (P <= hi + 1e-12), axis=1)
            out = np.full(len(P), np.nan)
            if inside.any():
                out[inside] = interp_many(U, P[inside], strict=False)
            return out
        return ev, float(np.max(g.spacing)) * 100.0

    def ev(P):
        P = np.atleast_2d(P)
        return np.asarray(U(*P.T), dtype=float) * np.ones(len(P))
    return ev, 1.0


def direction_net(direction, count: int, radius: float) -> np.ndarray:
    """The direction itself plus ``count`` perturbations of size ``radius``."""
    d = np.asarray(direction, dtype=float)
    if d.size == 2:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        pert = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        pert = _sphere_points(d.size, count)
    return np.vstack([d[None, :], d[None, :] + radius * pert])


def subderivative(U, z, direction, h_ladder=None, net_size: int | None = None,
                  rel_tol: float = 0.05) -> SubderivativeEstimate:
    """Estimate dU(z)(d) = liminf (U(z + h d') - U(z)) / h over h -> 0, d' -> d.

    At each ladder level the quotient is minimized over a net of directions
    within distance h min(1, h/h_0) of d.  Quotients whose magnitude at least doubles over both
    final level transitions with a fixed sign give a PLUS_INF / MINUS_INF trend.
    """
    ev, scale = _evaluator(U)
    z = np.asarray(z, dtype=float)
    d = np.asarray(direction, dtype=float)
    u0 = ev(z[None, :])[0]
    if not np.isfinite(u0):
        raise OutsideDomainError(f"{tuple(z)} is not in dom U")
    hs = list(h_ladder) if h_ladder is not None else [scale * 10.0 ** -k for k in range(1, 5)]
    net_size = net_size or 8 * len(z)
    levels = []
    for h in hs:
        # d' -> d faster than h, so a smooth point carries no O(h |grad U|) bias
        net = direction_net(d, net_size, h * min(1.0, h / hs[0]))
        vals = ev(z[None, :] + h * net)
        q = (vals - u0) / h
        q = q[~np.isnan(q)]
        levels.append(float(np.min(q)) if q.size else math.nan)
    good = [v for v in levels if not math.isnan(v)]
    if len(good) < 2:
        return SubderivativeEstimate(math.nan, levels, hs, False, "finite")
    a, b, c = (good[-3:] if len(good) >= 3 else [good[0]] + good[-2:])
    trend = "finite"
    if math.isinf(c):
        trend = "plus_inf" if c > 0 else "minus_inf"
    elif abs(b) > 0 and abs(a) > 0 and np.sign(a) == np.sign(b) == np.sign(c) \
            and abs(c) >= 2 * abs(b) and abs(b) >= 2 * abs(a):
        trend = "plus_inf" if c > 0 else "minus_inf"
    if trend == "finite":
        stable = abs(c - b) <= rel_tol * (1.0 + abs(c))
        value = c
    else:
        stable = True
        value = PLUS_INF if trend == "plus_inf" else -PLUS_INF
    return SubderivativeEstimate(value, levels, hs, bool(stable), trend, float(np.min(good)))


def unit_directions(dim: int = 2, count: int = 16) -> np.ndarray:
    if dim == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    return _sphere_points(dim, count)


def subdifferential_probe(U, z, candidate, directions=None, tol: float = 1e-6, **kw) -> bool:
    """True iff <candidate, d> <= dU(z)(d) + tol for every direction of the net."""
    z = np.asarray(z, dtype=float)
    dirs = unit_directions(len(z)) if directions is None else np.atleast_2d(directions)
    p = np.asarray(candidate, dtype=float)
    for d in dirs:
        est = subderivative(U, z, d, **kw)
        if math.isnan(est.value):
            continue
        if float(p @ d) > est.value + tol * (1.0 + abs(est.value) if math.isfinite(est.value) else 1.0):
            return False
    return True


# ---------------------------------------------------------------------------
# Steiner point

def _sphere_points(dim: int, count: int, seed: int = 0) -> np.ndarray:
    if dim == 3:
        k = np.arange(count) + 0.5
        phi = np.arccos(1 - 2 * k / count)
        th = np.pi * (1 + 5 ** 0.5) * k
        return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    u = qmc.Halton(d=dim, scramble=True, seed=seed).random(count)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def steiner_point(support, dim: int, M: int = 512) -> np.ndarray:
    """Mean of support points over M quasi-uniform directions.

    ``support(u)`` returns a maximizer of <u, y> over the set for each row of u.
    In 2-D the directions are equally spaced and offset by half a step, so
    centrally symmetric bodies come out exactly centered.
    """
    if dim == 1:
        U = np.array([[1.0], [-1.0]])
    elif dim == 2:
        ang = 2 * np.pi * (np.arange(M) + 0.5) / M
        U = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        U = _sphere_points(dim, M)
    S = np.asarray(support(U), dtype=float)
    if S.shape != U.shape or not np.isfinite(S).all():
        raise EmptySetError("support oracle failed (empty or unbounded set)")
    return S.mean(axis=0)


def polytope_support(vertices) -> Callable:
    V = np.asarray(vertices, dtype=float)

    def sup(U):
        return V[np.argmax(U @ V.T, axis=1)]
    return sup


def ball_support(center, radius: float) -> Callable:
    c = np.asarray(center, dtype=float)

    def sup(U):
        return c[None, :] + radius * U / np.linalg.norm(U, axis=1, keepdims=True)
    return sup


def box_support(lower, upper) -> Callable:
    lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)

    def sup(U):
        return np.where(U >= 0, hi[None, :], lo[None, :])
    return sup


# ---------------------------------------------------------------------------
# Theta: metric projection onto Q(t, x)

def _bracket_min(phi, lo, hi, n=2001):
    vs = np.linspace(lo, hi, n) if hi > lo else np.array([lo])
    vals = phi(vs)
    k = int(np.argmin(vals))
    if hi <= lo:
        return float(vs[0])
    a = vs[max(k - 1, 0)]
    b = vs[min(k + 1, n - 1)]
    res = minimize_scalar(lambda s: float(phi(np.array([s]))[0]), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-14 * max(1.0, abs(hi - lo)), "maxiter": 500})
    cand = [(float(vals[k]), float(vs[k]))]
    if res.success and np.isfinite(res.fun):
        cand.append((float(res.fun), float(res.x)))
    return min(cand)[1]


def parametrize_theta(q: QSample, a) -> tuple[float, float]:
    """Nearest point of Q(t,x) to a = (a_v, a_eta); points of Q are returned unchanged.

    For fixed v the closest admissible eta is min(a_eta, -L(v)), which leaves
    the convex one-dimensional problem min_v (v - a_v)^2 + max(0, a_eta + L(v))^2.
    """
    a_v, a_eta = float(a[0]), float(a[1])
    lv = float(q.L(a_v))
    if math.isfinite(lv) and a_eta <= -lv:
        return (a_v, a_eta)
    lo, hi = q.box()

    def phi(vs):
        lv = q.L(vs) * np.ones(np.shape(vs))
        with np.errstate(invalid="ignore", over="ignore"):
            out = (vs - a_v) ** 2 + np.maximum(0.0, a_eta + lv) ** 2
        return np.where(np.isfinite(lv), out, PLUS_INF)

    v = _bracket_min(phi, lo, hi)
    lv = float(q.L(v))
    if not math.isfinite(lv):
        raise RuntimeError("projection onto Q failed")
    return (v, min(a_eta, -lv))


def parametrize_theta_nd(lagrangian, t, x, a, box) -> np.ndarray:
    """Projection onto Q for vector velocities via L-BFGS-B on the reduced problem."""
    a = np.asarray(a, dtype=float)
    av, ae = a[:-1], a[-1]
    lv = float(lagrangian.eval(t, x, av))
    if math.isfinite(lv) and ae <= -lv:
        return a.copy()

    def phi(v):
        l = float(lagrangian.eval(t, x, v))
        return float(np.sum((v - av) ** 2) + max(0.0, ae + l) ** 2) if math.isfinite(l) else 1e300

    x0 = np.clip(av, [b[0] for b in box], [b[1] for b in box])
    res = minimize(phi, x0, method="L-BFGS-B", bounds=box)
    v = res.x
    return np.append(v, min(ae, -float(lagrangian.eval(t, x, v))))


def theta_lipschitz(lagrangian, R: float, pairs: int = 200, seed: int = 0, kR=None, t: float = 0.5,
                    a_radius: float = 4.0) -> dict:
    """Empirical quotients |Theta(x,a) - Theta(y,b)| / (k_R |x-y| + |a-b|) and the (P3) constant."""
    rng = np.random.default_rng(seed)
    k = kR if kR is not None else 1.0
    worst_a, worst_xa = 0.0, 0.0
    for _ in range(pairs):
        x, y = rng.uniform(-R, R, 2)
        a = rng.uniform(-a_radius, a_radius, 2)
        b = rng.uniform(-a_radius, a_radius, 2)
        ta = np.array(parametrize_theta(QSample(t, x, lagrangian), a))
        tb = np.array(parametrize_theta(QSample(t, x, lagrangian), b))
        ty = np.array(parametrize_theta(QSample(t, y, lagrangian), b))
        worst_a = max(worst_a, np.linalg.norm(ta - tb) / max(np.linalg.norm(a - b), 1e-300))
        worst_xa = max(worst_xa, np.linalg.norm(ta - ty) / (k * abs(x - y) + np.linalg.norm(a - b)))
    M = 2
    return {"max_quotient_in_a": float(worst_a), "max_quotient_in_x_a": float(worst_xa),
            "P3_constant": 10.0 * M, "kR": k}
