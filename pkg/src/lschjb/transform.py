"""Discrete Legendre-Fenchel conjugation on uniform grids.

``conjugate_slice`` evaluates g(v) = max_p {v p - f(p)} over the finite nodes of
``f``.  Convex inputs go through a slope-sorted scan (each v picks the node
where the discrete slope of f crosses v); anything else falls back to a
chunked direct scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extreal import PLUS_INF, Axis, Grid, GridFn, ImproperFunctionError

SLOPE_TOL = 1e-9
DEFAULT_RADIUS = 64.0


class ImproperConjugateError(ImproperFunctionError):
    pass


@dataclass(frozen=True)
class ConjugatePlan:
    """Where the sup runs (``source``) and where the conjugate is tabulated (``target``).

    ``truncated`` says the source axis cuts off a function whose domain extends
    further; only then can a boundary maximizer be an artefact of the cutoff.
    """

    source: Axis
    target: Axis
    truncated: bool = True

    def __post_init__(self):
        if self.truncated and not np.isclose(self.source.lower, -self.source.upper,
                                             rtol=0, atol=1e-12 * max(1.0, self.source.upper)):
            raise ValueError("dual grid must be symmetric about 0")

    @property
    def radius(self) -> float:
        return max(abs(self.source.lower), abs(self.source.upper))

    @classmethod
    def symmetric(cls, radius: float = DEFAULT_RADIUS, count: int = 2001,
                  target_radius: float | None = None, target_count: int | None = None,
                  source_name: str = "p", target_name: str = "v", truncated: bool = True):
        tr = radius if target_radius is None else target_radius
        return cls(Axis(-radius, radius, count, source_name),
                   Axis(-tr, tr, target_count or count, target_name), truncated)

    def reversed(self) -> "ConjugatePlan":
        return ConjugatePlan(self.target, self.source, truncated=False)


def _is_convex_run(vals: np.ndarray, h: float) -> bool:
    if len(vals) < 3:
        return True
    s = np.diff(vals) / h
    scale = max(1.0, float(np.max(np.abs(s))))
    return bool(np.all(np.diff(s) >= -SLOPE_TOL * scale))


def _conj_line(p: np.ndarray, f: np.ndarray, v: np.ndarray, truncated: bool, tol: float):
    """Conjugate of one line. Returns (values, argmax index, suspect mask, used_scan)."""
    fin = np.flatnonzero(np.isfinite(f))
    if fin.size == 0:
        raise ImproperConjugateError("conjugand is identically PLUS_INF")
    contiguous = fin[-1] - fin[0] + 1 == fin.size
    lo, hi = fin[0], fin[-1] + 1
    pp, ff = p[lo:hi], f[lo:hi]
    h = p[1] - p[0]
    scan = contiguous and _is_convex_run(ff, h)
    if scan:
        if len(pp) == 1:
            idx = np.zeros(len(v), dtype=int)
        else:
            s = np.diff(ff) / h
            # maximizer of v p - f sits where the slope first reaches v
            k = np.searchsorted(s, v, side="left")
            cand = np.stack([np.clip(k + o, 0, len(pp) - 1) for o in (-1, 0, 1)])
            score = v[None, :] * pp[cand] - ff[cand]
            idx = cand[np.argmax(score, axis=0), np.arange(len(v))]
        vals = v * pp[idx] - ff[idx]
        gidx = idx + lo
    else:
        pf, fv = p[fin], f[fin]
        vals = np.empty(len(v))
        gidx = np.empty(len(v), dtype=int)
        step = max(1, 4_000_000 // max(1, len(pf)))
        for a in range(0, len(v), step):
            sc = v[a:a + step, None] * pf[None, :] - fv[None, :]
            j = np.argmax(sc, axis=1)
            vals[a:a + step] = sc[np.arange(len(j)), j]
            gidx[a:a + step] = fin[j]
    suspect = np.zeros(len(v), dtype=bool)
    if truncated:
        edge = np.zeros(len(v), dtype=bool)
        if np.isfinite(f[0]):
            edge |= gidx == 0
        if np.isfinite(f[-1]):
            edge |= gidx == len(p) - 1
        if edge.any():
            inner = fin[(fin > 0) & (fin < len(p) - 1)]
            if inner.size:
                best_inner = np.max(v[edge, None] * p[inner][None, :] - f[inner][None, :], axis=1)
                scale = np.maximum(1.0, np.abs(vals[edge]))
                suspect[edge] = vals[edge] > best_inner + tol * scale
            else:
                suspect[edge] = True
    return vals, gidx, suspect, scan


def conjugate_array(values: np.ndarray, plan: ConjugatePlan, tol: float = 1e-9):
    """Conjugate each row of a 2-D array along its last axis; returns (G, suspect, scanned)."""
    F = np.atleast_2d(np.asarray(values, dtype=float))
    if np.isneginf(F).any():
        raise ImproperConjugateError("conjugand takes MINUS_INF")
    p, v = plan.source.nodes(), plan.target.nodes()
    if F.shape[-1] != len(p):
        raise ValueError("values do not match the plan's source axis")
    G = np.empty((F.shape[0], len(v)))
    S = np.zeros(G.shape, dtype=bool)
    scanned = True
    for r in range(F.shape[0]):
        G[r], _, S[r], sc = _conj_line(p, F[r], v, plan.truncated, tol)
        scanned &= sc
    return G, S, scanned


def conjugate_slice(f: GridFn, plan: ConjugatePlan | None = None, tol: float = 1e-9) -> GridFn:
    """Discrete conjugate g(v) = max_p {v p - f(p)} of a 1-D grid function.

    Nodes whose maximizer is a finite outermost node of a truncated source axis,
    and which beat every interior node by more than ``tol``, are marked in
    ``meta["suspect"]``: their true value is larger (possibly PLUS_INF).
    """
    if f.grid.ndim != 1:
        raise ValueError("conjugate_slice expects a 1-D GridFn; use conjugate_nd")
    if plan is None:
        ax = f.grid.axes[0]
        plan = ConjugatePlan(ax, ax, truncated=False)
    if not np.isclose(plan.source.spacing, f.grid.axes[0].spacing) or plan.source.count != f.grid.shape[0]:
        raise ValueError("plan source axis does not match the function's grid")
    G, S, scanned = conjugate_array(f.values[None, :], plan, tol)
    return GridFn(Grid((plan.target,)), G[0],
                  {"suspect": S[0], "radius": plan.radius, "scan": "slope" if scanned else "direct",
                   "truncated": plan.truncated})


def conjugate_nd(f: GridFn, plans: list[ConjugatePlan] | None = None, tol: float = 1e-9) -> GridFn:
    """d-dimensional conjugate computed one axis at a time.

    Uses sup_p <v,p> - f(p) = max_{p_1} v_1 p_1 + ... + max_{p_d}(v_d p_d - f(p)),
    each inner stage being a 1-D conjugate of a (partially minimized) slice.
    """
    d = f.grid.ndim
    if plans is None:
        plans = [ConjugatePlan(a, a, truncated=False) for a in f.grid.axes]
    if len(plans) != d:
        raise ValueError("need one plan per axis")
    if not np.isfinite(f.values).any():
        raise ImproperConjugateError("conjugand is identically PLUS_INF")
    A = np.array(f.values, dtype=float)
    # process last axis first; the working array holds -h so each stage is a plain conjugate
    for ax in reversed(range(d)):
        plan = replace_truncation(plans[ax], False)
        moved = np.moveaxis(A, ax, -1)
        shp = moved.shape
        rows = moved.reshape(-1, shp[-1])
        out = np.full((rows.shape[0], plan.target.count), PLUS_INF)
        live = np.isfinite(rows).any(axis=1)
        if live.any():
            G, _, _ = conjugate_array(rows[live], plan, tol)
            out[live] = G
        res = out.reshape(shp[:-1] + (plan.target.count,))
        res = np.moveaxis(res, -1, ax)
        A = res if ax == 0 else -res
        # -res is again +inf where the slice was empty (sup over nothing = -inf)
        if ax != 0:
            A = np.where(np.isneginf(A), PLUS_INF, A)
    return GridFn(Grid(tuple(p.target for p in plans)), A, {"radius": [p.radius for p in plans]})


def replace_truncation(plan: ConjugatePlan, truncated: bool) -> ConjugatePlan:
    return ConjugatePlan(plan.source, plan.target, truncated)


def _slope_axis(f: GridFn) -> Axis:
    ax = f.grid.axes[0]
    vals = f.values
    fin = np.isfinite(vals)
    both = fin[1:] & fin[:-1]
    s = np.abs(np.diff(np.where(fin, vals, 0.0))[both]) / ax.spacing if both.any() else np.array([1.0])
    r = float(np.max(s)) if s.size else 1.0
    r = max(r, 1.0) * 1.0
    return Axis(-r, r, 2 * ax.count - 1, "slope")


def biconjugate(f: GridFn, plan: ConjugatePlan | None = None, tol: float = 1e-9) -> GridFn:
    """f** on f's own grid: conjugate to ``plan.target`` and back again.

    Without a plan the intermediate axis spans the range of discrete slopes of f,
    which makes the result the convex envelope of f on the grid.
    """
    ax = f.grid.axes[0]
    if plan is None:
        plan = ConjugatePlan(ax, _slope_axis(f), truncated=False)
    g = conjugate_slice(f, replace_truncation(plan, False), tol)
    back = ConjugatePlan(plan.target, ax, truncated=False)
    gg = conjugate_slice(g, back, tol)
    return gg.with_values(gg.values, suspect=np.zeros(ax.count, dtype=bool))


def _intervals(mask: np.ndarray) -> list[tuple[int, int]]:
    out = []
    i, n = 0, len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            out.append((i, j))
            i = j + 1
        else:
            i += 1
    return out


def effective_domain(f: GridFn):
    """Maximal index intervals (inclusive) of finite, non-suspect nodes.

    1-D input gives a list of (start, stop) pairs; higher-dimensional input gives
    a dict mapping each leading index tuple to the intervals along the last axis.
    """
    if not f.proper:
        raise ImproperFunctionError("effective_domain needs a proper function")
    mask = np.isfinite(f.values)
    sus = f.meta.get("suspect")
    if sus is not None:
        mask &= ~np.asarray(sus, dtype=bool).reshape(mask.shape)
    if f.grid.ndim == 1:
        return _intervals(mask)
    out = {}
    for idx in np.ndindex(*mask.shape[:-1]):
        out[idx] = _intervals(mask[idx])
    return out


def domain_bounds(f: GridFn) -> tuple[float, float] | None:
    """Coordinates of the outermost finite, non-suspect nodes of a 1-D function."""
    iv = effective_domain(f)
    if not iv:
        return None
    x = f.grid.axes[0].nodes()
    return float(x[iv[0][0]]), float(x[iv[-1][1]])


def recession_slope(h, direction: float, scales=(1e10, 1e12)) -> float:
    """Asymptotic slope lim H(s d)/s of a real-valued convex function along ``direction``.

    For a closed convex L = H*, the closure of dom L is {v : v d <= slope(d)}.
    """
    vals = [(h(s * direction) - h(0.0)) / s for s in scales]
    return float(vals[-1])


def conjugate_hamiltonian_slice(H, t, x, plan: ConjugatePlan, tol: float = 1e-9) -> GridFn:
    """L(t,x,.) = H(t,x,.)* for a model, with the domain fixed by H's recession slopes.

    Nodes outside [-slope(-1), slope(+1)] become PLUS_INF; nodes inside that were
    truncation-suspect keep their (lower bound) value and stay flagged.
    """
    p = plan.source.nodes()
    hv = np.array([H(t, x, pi) for pi in p]) if not hasattr(H, "eval_p") else H.eval_p(t, x, p)
    g = conjugate_slice(GridFn(Grid((plan.source,)), hv), plan, tol)
    fun = (lambda q: H.eval_p(t, x, np.array([q]))[0]) if hasattr(H, "eval_p") else (lambda q: H(t, x, q))
    up = recession_slope(fun, 1.0)
    dn = -recession_slope(fun, -1.0)
    v = plan.target.nodes()
    h = plan.target.spacing
    outside = (v > up + 1e-9 * max(1.0, h)) | (v < dn - 1e-9 * max(1.0, h))
    vals = np.where(outside, PLUS_INF, g.values)
    sus = np.asarray(g.meta["suspect"]) & ~outside
    return g.with_values(vals, suspect=sus, domain=(dn, up))
