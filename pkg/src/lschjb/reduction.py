"""Control representations H(t,x,p) = sup_a <p, f(t,x,a)> - l(t,x,a) and the
positively homogeneous Hamiltonian built from them.

Representations are sampled: the parameter set is a finite array, and each
representation knows how to produce its images (f, l) over that array at a
given (t, x).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .models import (HamiltonianModel, LagrangianModel, SamplerConfig, _lagrangian_evaluator, _lambda_parts,
                     check_condition_A, lagrangian_slice, sample_tx)


class ReductionError(ValueError):
    pass


@dataclass
class Representation:
    """Sampled triple (A_h, f, l).

    ``images(t, x)`` returns the arrays f(t,x,a) and l(t,x,a) over the rows of
    ``params``.  ``tag`` records how the triple was obtained.
    """

    params: np.ndarray
    images: Callable
    tag: str
    hamiltonian: HamiltonianModel | None = None
    audit: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.atleast_2d(np.asarray(self.params, dtype=float))
        if self.params.shape[0] == 0:
            raise ReductionError("empty parameter sample")

    @property
    def size(self) -> int:
        return int(self.params.shape[0])

    def sup(self, t, x, p) -> np.ndarray:
        """max over the samples of p f - l, vectorized over p."""
        f, l = self.images(t, x)
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return np.max(p[:, None] * f[None, :] - l[None, :], axis=1)

    def to_csv(self, points) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = self.params.shape[1]
        w.writerow(["t", "x", "index"] + [f"a{i}" for i in range(k)] + ["f", "l"])
        for t, x in points:
            f, l = self.images(t, x)
            for i in range(self.size):
                w.writerow([repr(float(t)), repr(float(x)), i] + [repr(float(c)) for c in self.params[i]]
                           + [repr(float(f[i])), repr(float(l[i]))])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# printed triples

def sec3_printed(count: int = 257) -> Representation:
    """A = [-1, 1], f(x, a) = a |x|, l(x, a) = |a|."""
    a = np.linspace(-1.0, 1.0, count)

    def images(t, x):
        return a * abs(float(x)), np.abs(a)
    from .models import builtin
    return Representation(a[:, None], images, "printed", builtin("sec3"))


def zero_hamiltonian(T: float = 1.0) -> HamiltonianModel:
    """H = 0, whose conjugate is the indicator of {0}."""
    L = LagrangianModel("zero-L", 1, T, lambda t, x, v: np.where(np.asarray(v) == 0.0, 0.0, np.inf),
                        domain=lambda t, x: (0.0, 0.0), known_CR=lambda R: 0.0)
    return HamiltonianModel("zero", 1, T, lambda t, x, p: np.zeros(np.broadcast(t, x, p).shape),
                            known_lambda=lambda t, x: 0.0, known_kR=lambda R, t=None: 0.0,
                            known_zetaR=lambda R, t=None: 0.0, known_theta=lambda t: 0.0, lagrangian=L)


def abs_hamiltonian(T: float = 1.0) -> HamiltonianModel:
    """H = |p|: conjugate 0 on [-1, 1]."""
    L = LagrangianModel("abs-L", 1, T, lambda t, x, v: np.where(np.abs(np.asarray(v)) <= 1.0, 0.0, np.inf),
                        domain=lambda t, x: (-1.0, 1.0), known_CR=lambda R: 1.0)
    return HamiltonianModel("abs", 1, T, lambda t, x, p: np.abs(np.asarray(p, dtype=float)) * np.ones(np.broadcast(t, x, p).shape),
                            known_lambda=lambda t, x: 1.0, known_kR=lambda R, t=None: 0.0,
                            known_zetaR=lambda R, t=None: 0.0, known_theta=lambda t: 1.0, lagrangian=L)


# ---------------------------------------------------------------------------
# projection onto epi H*(t, x, .)

def _dom_box(H: HamiltonianModel, t, x):
    lag = H.lagrangian
    if lag is not None and lag.domain is not None:
        lo, hi = lag.domain(t, x)
        return float(lo), float(hi)
    g = lagrangian_slice(H, t, x)
    dn, up = g.meta["domain"]
    return float(dn), float(up)


def project_epi(Lfun, t, x, B, box, grid: int = 1025, iters: int = 80, chunk: int = 4096):
    """Nearest points of epi L(t,x,.) to the rows (b_v, b_eta) of B.

    For fixed v the best eta is max(b_eta, L(v)), leaving the convex scalar
    problem min_v (v - b_v)^2 + max(0, L(v) - b_eta)^2, solved by a grid scan
    and golden-section refinement inside the bracketing cell.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    lo, hi = box
    bv, be = B[:, 0], B[:, 1]
    out = np.empty_like(B)
    if hi <= lo:
        lv = float(np.asarray(Lfun(t, x, lo)))
        out[:, 0] = lo
        out[:, 1] = np.maximum(be, lv)
        return out
    vg = np.linspace(lo, hi, grid)
    Lg = np.asarray(Lfun(t, x, vg), dtype=float) * np.ones(grid)

    def phi(v, b1, b2):
        lv = np.asarray(Lfun(t, x, v), dtype=float) * np.ones(np.shape(v))
        with np.errstate(invalid="ignore", over="ignore"):
            val = (v - b1) ** 2 + np.maximum(0.0, lv - b2) ** 2
        return np.where(np.isfinite(lv), val, np.inf)

    step = vg[1] - vg[0]
    for s in range(0, len(B), chunk):
        b1, b2 = bv[s:s + chunk], be[s:s + chunk]
        with np.errstate(invalid="ignore", over="ignore"):
            G = (vg[None, :] - b1[:, None]) ** 2 + np.maximum(0.0, Lg[None, :] - b2[:, None]) ** 2
        G = np.where(np.isfinite(Lg)[None, :], G, np.inf)
        k = np.argmin(G, axis=1)
        a = np.maximum(vg[k] - step, lo)
        c = np.minimum(vg[k] + step, hi)
        gr = (math.sqrt(5) - 1) / 2
        for _ in range(iters):
            m1 = c - gr * (c - a)
            m2 = a + gr * (c - a)
            left = phi(m1, b1, b2) <= phi(m2, b1, b2)
            c = np.where(left, m2, c)
            a = np.where(left, a, m1)
        v = 0.5 * (a + c)
        # the grid node wins if refinement wandered onto an infinite value
        better = phi(v, b1, b2) <= G[np.arange(len(k)), k]
        v = np.where(better, v, vg[k])
        lv = np.asarray(Lfun(t, x, v), dtype=float) * np.ones(v.shape)
        out[s:s + chunk, 0] = v
        out[s:s + chunk, 1] = np.maximum(b2, lv)
    return out


def disk_samples(per_axis: int) -> np.ndarray:
    g = np.linspace(-1.0, 1.0, per_axis)
    A, Bm = np.meshgrid(g, g, indexing="ij")
    P = np.column_stack([A.ravel(), Bm.ravel()])
    return P[np.einsum("ij,ij->i", P, P) <= 1.0 + 1e-12]


def _lambda_at(H: HamiltonianModel, t, x) -> float:
    if H.known_lambda is not None:
        return float(H.known_lambda(t, x))
    return float(max(_lambda_parts(lagrangian_slice(H, t, x))))


def _K_R(H, R, t):
    if H.known_kR is None or H.known_zetaR is None:
        return None
    return 20.0 * 2 * (float(H.known_kR(R, t)) + 2.0 * float(H.known_zetaR(R, t)))


def _C(H, t):
    return None if H.known_theta is None else 20.0 * float(H.known_theta(t)) + 6.0


def build_representation(H: HamiltonianModel, plan=None, sampler: SamplerConfig | dict | None = None,
                         per_axis: int = 257, condition=None, audit_points: int = 4,
                         p_probe=None) -> Representation:
    """Representation of H by projecting omega(t,x) a onto epi H*(t,x,.).

    omega = 2 lambda + 1, with lambda from the model or estimated from the
    numerical conjugate.  The sandwich property and the sup recovery are
    audited at ``audit_points`` sampled (t, x); (R2)/(R3) envelopes are
    reported against K_R(t) and C(t).
    """
    cfg = sampler if isinstance(sampler, SamplerConfig) else SamplerConfig.from_dict(sampler)
    rep_A = condition if condition is not None else check_condition_A(H, plan, cfg)
    if rep_A.verdict != "pass":
        raise ReductionError(f"condition (A) verdict is {rep_A.verdict!r}; no representation is built")
    Lfun = _lagrangian_evaluator(H)
    A_h = disk_samples(per_axis)
    cache: dict = {}

    def images(t, x):
        key = (float(t), float(x))
        if key not in cache:
            om = 2.0 * _lambda_at(H, t, x) + 1.0
            E = project_epi(Lfun, t, x, om * A_h, _dom_box(H, t, x))
            cache[key] = (E[:, 0], E[:, 1])
        return cache[key]

    rep = Representation(A_h, images, "epigraph-projection", H)
    R = max(cfg.R_list)
    pts = sample_tx(H.horizon, R, audit_points, cfg.seed + 29)
    rep.audit = audit_representation(rep, H, pts, p_probe=p_probe)
    rep.audit["envelopes"] = envelopes(rep, H, cfg, pairs=audit_points)
    return rep


def audit_representation(rep: Representation, H: HamiltonianModel, points, p_probe=None,
                         graph_nodes: int = 201, tol: float = 1e-9) -> dict:
    """Sandwich and sup-recovery checks at the given (t, x)."""
    Lfun = _lagrangian_evaluator(H)
    P = np.linspace(-4.0, 4.0, 81) if p_probe is None else np.asarray(p_probe, dtype=float)
    rows = []
    for t, x in points:
        f, l = rep.images(t, x)
        Lf = np.asarray(Lfun(t, x, f), dtype=float) * np.ones(f.shape)
        epi_gap = float(np.max(np.where(np.isfinite(Lf), Lf - l, np.inf)))
        lo, hi = _dom_box(H, t, x)
        vg = np.linspace(lo, hi, graph_nodes) if hi > lo else np.array([lo])
        Lg = np.asarray(Lfun(t, x, vg), dtype=float) * np.ones(vg.shape)
        fin = np.isfinite(Lg)
        G = np.column_stack([vg[fin], Lg[fin]])
        E = np.column_stack([f, l])
        d = np.min(np.linalg.norm(G[:, None, :] - E[None, :, :], axis=2), axis=1) if len(G) else np.zeros(0)
        s = rep.sup(t, x, P)
        h = np.asarray(H.eval(t, x, P), dtype=float) * np.ones(P.shape)
        rows.append({"t": float(t), "x": float(x), "epi_inclusion_gap": epi_gap,
                     "graph_coverage": float(d.max()) if d.size else 0.0,
                     "sup_minus_H_max": float(np.max(s - h)), "H_minus_sup_max": float(np.max(h - s))})
    over = max(r["sup_minus_H_max"] for r in rows)
    return {"points": rows, "representation_ok": bool(over <= tol + 1e-9 * 0),
            "sup_excess_max": over, "sup_deficit_max": max(r["H_minus_sup_max"] for r in rows),
            "epi_inclusion_ok": bool(max(r["epi_inclusion_gap"] for r in rows) <= tol),
            "graph_coverage_max": max(r["graph_coverage"] for r in rows)}


def envelopes(rep: Representation, H: HamiltonianModel, cfg: SamplerConfig, pairs: int = 4) -> dict:
    """Empirical x-Lipschitz quotient (R2) and growth ratio (R3) of e = (f, l)."""
    rng = np.random.default_rng(cfg.seed + 31)
    out = {}
    for R in cfg.R_list:
        q_lip, q_gr = 0.0, 0.0
        t_used = []
        for _ in range(pairs):
            t = float(rng.uniform(0.05, H.horizon))
            x, y = rng.uniform(-R, R, 2)
            fx, lx = rep.images(t, x)
            fy, ly = rep.images(t, y)
            dif = np.hypot(fx - fy, lx - ly)
            q_lip = max(q_lip, float(dif.max()) / max(abs(x - y), 1e-300))
            q_gr = max(q_gr, float(np.hypot(fx, lx).max()) / (1 + abs(x)))
            t_used.append(t)
        K = [_K_R(H, R, t) for t in t_used]
        C = [_C(H, t) for t in t_used]
        out[str(R)] = {"lipschitz_quotient": q_lip, "growth_ratio": q_gr,
                       "K_R_min": None if None in K else min(K), "C_min": None if None in C else min(C),
                       "within_K_R": None if None in K else bool(q_lip <= min(K)),
                       "within_C": None if None in C else bool(q_gr <= min(C))}
    return out


# ---------------------------------------------------------------------------
# the homogeneous Hamiltonian

@dataclass
class ReducedHamiltonian:
    base: Representation
    eval: Callable

    def __call__(self, t, x, r, p, q):
        return self.eval(t, x, r, p, q)

    def to_csv(self, rows) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "r", "p", "q", "value"])
        for t, x, r, p, q in rows:
            w.writerow([repr(float(c)) for c in (t, x, r, p, q)] + [repr(float(self.eval(t, x, r, p, q)))])
        return buf.getvalue()


def build_hbar(rep: Representation) -> ReducedHamiltonian:
    """Hbar(t,x,r,p,q) = max over the samples of p f + q l."""
    if rep.size == 0:
        raise ReductionError("empty parameter sample")

    def ev(t, x, r, p, q):
        t, x, r, p, q = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, x, r, p, q)))
        out = np.empty(t.shape)
        flat = [a.ravel() for a in (t, x, p, q)]
        res = out.ravel()
        for i, (ti, xi, pi, qi) in enumerate(zip(*flat)):
            f, l = rep.images(ti, xi)
            res[i] = np.max(pi * f + qi * l)
        out = res.reshape(t.shape)
        return out if out.ndim else float(out)

    return ReducedHamiltonian(rep, ev)


def hbar_identities(hbar: ReducedHamiltonian, H: HamiltonianModel, n: int = 200, seed: int = 0,
                    R: float = 2.0) -> dict:
    """Homogeneity in (p, q) and the q = -1 restriction at random probes."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.05, H.horizon, n)
    x = rng.uniform(-R, R, n)
    r = rng.uniform(-1, 1, n)
    p = rng.uniform(-4, 4, n)
    q = rng.uniform(-2, 2, n)
    s = rng.uniform(0.1, 10.0, n)
    a = hbar.eval(t, x, r, s * p, s * q)
    b = s * hbar.eval(t, x, r, p, q)
    hom = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))
    res = float(np.max(np.abs(hbar.eval(t, x, r, p, -1.0) - np.asarray(H.eval(t, x, p), dtype=float))))
    return {"homogeneity_max_rel_error": hom, "restriction_max_error": res, "probes": n}


# ---------------------------------------------------------------------------
# Barron-Jensen Hamiltonian

def barron_jensen_hbar(H: HamiltonianModel, t, x, r, p, q, nodes: int = 401) -> float:
    """sup over a dom L(t,x,.) grid of v p + q L(t,x,v)."""
    Lfun = _lagrangian_evaluator(H)
    lo, hi = _dom_box(H, t, x)
    vs = np.linspace(lo, hi, nodes) if hi > lo else np.array([lo])
    lv = np.asarray(Lfun(t, x, vs), dtype=float) * np.ones(vs.shape)
    fin = np.isfinite(lv)
    if not fin.any():
        return -math.inf
    return float(np.max(vs[fin] * p + q * lv[fin]))


def barron_jensen_diagnostic(H: HamiltonianModel, probe: dict | None = None) -> dict:
    """Scan x -> Hbar_BJ(x, r, p, q) for jumps at fixed (r, p, q).

    A node x0 is reported when the one-sided differences at x0 +- delta stay
    above ``jump_tol`` as delta runs down to ``delta_min``; continuous
    profiles shrink like delta.
    """
    pr = dict(probe or {})
    t = float(pr.get("t", 0.5))
    r = float(pr.get("r", 0.0))
    p = float(pr.get("p", 1.0))
    qs = pr.get("q", [1.0])
    qs = [float(v) for v in (qs if isinstance(qs, (list, tuple)) else [qs])]
    xs = np.asarray(pr.get("x", np.linspace(-1.0, 1.0, 21)), dtype=float)
    deltas = 10.0 ** -np.arange(2, int(pr.get("delta_exp", 9)) + 1)
    jump_tol = float(pr.get("jump_tol", 1e-4))
    out = {"t": t, "r": r, "p": p, "scan": xs.tolist(), "cases": []}
    for q in qs:
        jumps = []
        for x0 in xs:
            v0 = barron_jensen_hbar(H, t, x0, r, p, q)
            diffs = []
            sides = None
            for d in deltas:
                lft = barron_jensen_hbar(H, t, x0 - d, r, p, q)
                rgt = barron_jensen_hbar(H, t, x0 + d, r, p, q)
                diffs.append(max(abs(lft - v0), abs(rgt - v0)))
                sides = (lft, rgt)
            if diffs[-1] > jump_tol and diffs[-1] >= 0.5 * diffs[0]:
                jumps.append({"x": float(x0), "value": v0, "left_limit": sides[0], "right_limit": sides[1],
                              "magnitude": float(diffs[-1])})
        out["cases"].append({"q": q, "jumps": jumps, "continuous": not jumps})
    return out


# ---------------------------------------------------------------------------
# convexification

def convexify_representation(rep: Representation, combos: int = 4000, lattice: int = 8, seed: int = 0,
                             dim: int = 1) -> Representation:
    """Parameters become (index triple, simplex weights); f and l become convex combinations.

    With N + 1 = 2 image coordinates, Caratheodory needs three points, so
    triples suffice.  All single samples are kept, so a one-point set maps to
    itself.
    """
    if dim + 1 > 3:
        raise ReductionError("convexification is sampled only for N + 1 <= 3")
    m = rep.size
    k = dim + 2
    rng = np.random.default_rng(seed)
    if m == 1:
        idx = np.zeros((1, k), dtype=int)
        wts = np.eye(1, k)
    else:
        lat = [(i, j, lattice - i - j) for i in range(lattice + 1) for j in range(lattice + 1 - i)]
        W = np.array(lat, dtype=float) / lattice
        tri = rng.integers(0, m, size=(combos, k))
        idx = np.vstack([np.repeat(np.arange(m)[:, None], k, axis=1), np.repeat(tri, len(W), axis=0)])
        wts = np.vstack([np.tile([1.0] + [0.0] * (k - 1), (m, 1)), np.tile(W, (combos, 1))])

    def images(t, x):
        f, l = rep.images(t, x)
        return np.sum(wts * f[idx], axis=1), np.sum(wts * l[idx], axis=1)

    params = np.hstack([idx.astype(float), wts])
    return Representation(params, images, "convexified", rep.hamiltonian,
                          {"base_size": m, "combos": int(len(idx))})


def lambda_hat(rep: Representation) -> Callable:
    """lambda_hat(t, x) = sup over the samples of |f| + |l|."""
    def lam(t, x):
        f, l = rep.images(t, x)
        return float(np.max(np.abs(f) + np.abs(l)))
    return lam


def coverage_audit(conv: Representation, H: HamiltonianModel, points, cells: int = 200) -> dict:
    """Does the image of f cover a grid of dom H*(t,x,.) within one cell?  And the (A) bounds."""
    Lfun = _lagrangian_evaluator(H)
    lam = lambda_hat(conv)
    rows = []
    for t, x in points:
        f, l = conv.images(t, x)
        lo, hi = _dom_box(H, t, x)
        cell = (hi - lo) / cells if hi > lo else 0.0
        grid = np.linspace(lo, hi, cells + 1) if hi > lo else np.array([lo])
        gap = float(np.max(np.min(np.abs(grid[:, None] - np.sort(f)[None, :]), axis=1)))
        lv = np.asarray(Lfun(t, x, grid), dtype=float) * np.ones(grid.shape)
        fin = np.isfinite(lv)
        lh = lam(t, x)
        rows.append({"t": float(t), "x": float(x), "cell": cell, "coverage_gap": gap,
                     "covered": bool(gap <= cell + 1e-12),
                     "lambda_hat": lh, "dom_norm": max(abs(lo), abs(hi)),
                     "sup_abs_L": float(np.max(np.abs(lv[fin]))) if fin.any() else 0.0})
    ok = all(r["covered"] for r in rows)
    bounds = all(r["dom_norm"] <= r["lambda_hat"] + 1e-9 and r["sup_abs_L"] <= r["lambda_hat"] + 1e-9
                 for r in rows)
    return {"points": rows, "covered": ok, "A_bounds_hold": bounds}


def with_lambda_hat(H: HamiltonianModel, rep: Representation) -> HamiltonianModel:
    """H with its known lambda replaced by the representation's lambda_hat."""
    return replace(H, known_lambda=lambda_hat(rep))


def sup_refinement(H: HamiltonianModel, sizes=(17, 33, 65), points=None, p_probe=None, seed: int = 0) -> dict:
    """Sup deficit H - max(p f - l) as the parameter sample is refined.

    Each entry of ``sizes`` is a per-axis count; consecutive entries should
    roughly double the resolution.
    """
    pts = points if points is not None else sample_tx(H.horizon, 2.0, 3, seed + 37)
    defs = []
    lam_rep = None
    for k in sizes:
        rep = Representation(disk_samples(k), lambda t, x: (np.zeros(1), np.zeros(1)), "epigraph-projection", H)
        Lfun = _lagrangian_evaluator(H)

        def images(t, x, A=rep.params):
            om = 2.0 * _lambda_at(H, t, x) + 1.0
            E = project_epi(Lfun, t, x, om * A, _dom_box(H, t, x))
            return E[:, 0], E[:, 1]
        rep.images = images
        lam_rep = audit_representation(rep, H, pts, p_probe=p_probe)
        defs.append(lam_rep["sup_deficit_max"])
    ratios = [a / b if b > 0 else math.inf for a, b in zip(defs[:-1], defs[1:])]
    return {"sizes": list(sizes), "deficit": defs, "ratios": ratios,
            "refines": bool(all(r >= 1.5 for r in ratios)), "excess_max": lam_rep["sup_excess_max"]}
