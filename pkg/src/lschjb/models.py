"""Registry of Hamiltonian/Lagrangian models and sampled regularity checkers.

Every model evaluates with numpy broadcasting over (t, x, p) or (t, x, v).
The checkers never prove a condition; they look for violations on seeded
low-discrepancy samples and on refinement ladders aimed at a suspected
singularity.  "Unbounded" means growth by a factor of at least 4 over three
ladder levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np
from scipy.stats import qmc

from .extreal import PLUS_INF
from .transform import ConjugatePlan, conjugate_hamiltonian_slice

GROWTH_FACTOR = 4.0
LADDER_LEVELS = 4  # three refinements beyond the base level


class UnknownModelError(KeyError):
    pass


class InvalidConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HamiltonianModel:
    name: str
    dim: int
    horizon: float
    eval: Callable
    known_c: Callable | None = None
    known_kR: Callable | None = None
    known_CR: Callable | None = None
    known_lambda: Callable | None = None
    known_theta: Callable | None = None
    known_zetaR: Callable | None = None
    lagrangian: "LagrangianModel | None" = None
    control: dict | None = None
    description: str = ""

    def __call__(self, t, x, p):
        return self.eval(t, x, p)

    def eval_p(self, t, x, p):
        return np.asarray(self.eval(t, x, np.asarray(p, dtype=float)), dtype=float) * np.ones(np.shape(p))


@dataclass(frozen=True)
class LagrangianModel:
    name: str
    dim: int
    horizon: float
    eval: Callable
    domain: Callable | None = None
    segment_cost: Callable | None = None
    hamiltonian: HamiltonianModel | None = None
    known_CR: Callable | None = None
    known_c: Callable | None = None
    description: str = ""

    def __call__(self, t, x, v):
        return self.eval(t, x, v)


@dataclass(frozen=True)
class ValueModel:
    """Closed-form value function with an analytic gradient on its smooth part."""

    name: str
    horizon: float
    eval: Callable
    gradient: Callable
    lagrangian: LagrangianModel | None = None
    description: str = ""

    def __call__(self, t, x):
        return self.eval(t, x)

    def terminal(self, x):
        return self.eval(self.horizon, x)


@dataclass
class ConditionReport:
    condition: str
    verdict: str
    witnesses: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    seed: int | None = None
    notes: str = ""

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "inconclusive"):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == "fail" and not self.witnesses:
            raise ValueError("a fail verdict needs a witness")

    def to_dict(self) -> dict:
        return {"condition": self.condition, "verdict": self.verdict, "witnesses": self.witnesses,
                "estimates": self.estimates, "seed": self.seed, "notes": self.notes}


# ---------------------------------------------------------------------------
# closed forms

def _a(x):
    return np.abs(np.asarray(x, dtype=float))


def _safe_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.divide(a, b, out=np.full(np.broadcast(a, b).shape, PLUS_INF), where=b != 0)


def _sqrt_kink(z):
    """(sqrt(z) - 1)^2 for z > 1 and 0 otherwise."""
    z = np.asarray(z, dtype=float)
    return np.where(z > 1.0, (np.sqrt(np.maximum(z, 1.0)) - 1.0) ** 2, 0.0)


def _ratio_lagrangian(v, r):
    """|v|/(r-|v|) on |v| < r, indicator of {0} when r = 0, PLUS_INF elsewhere."""
    v = np.asarray(v, dtype=float)
    r = np.asarray(r, dtype=float)
    av = np.abs(v)
    inside = av < r
    val = np.where(inside, av / np.where(inside, r - av, 1.0), PLUS_INF)
    return np.where(r == 0, np.where(v == 0, 0.0, PLUS_INF), val)


def alpha(t, x):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.maximum(_a(x) / np.sqrt(np.where(t > 0, t, 1.0)) - 1.0 / np.where(t > 0, t, 1.0), 0.0)
    return np.where(t > 0, val, 0.0)


def beta(t, x):
    w = np.sqrt(np.maximum(np.asarray(t, dtype=float), 0.0)) + _a(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = w * np.abs(np.sin(1.0 / np.where(w > 0, w, 1.0)))
    return np.where(w > 0, val, 0.0)


def gamma(t, x):
    return alpha(t, x) + beta(t, x)


def _inv_sqrt(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t > 0, 1.0 / np.sqrt(np.where(t > 0, t, 1.0)), PLUS_INF)


def ex1_H(t, x, p):
    return _sqrt_kink(_a(x) * _a(p))


def ex1_L(t, x, v):
    return _ratio_lagrangian(v, _a(x) * np.ones(np.shape(t)))


def ex2_H(t, x, p):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.maximum(_a(p) - _inv_sqrt(np.where(t > 0, t, 1.0)), 0.0), 0.0 * _a(p))


def ex2_L(t, x, v):
    t = np.asarray(t, dtype=float) + 0.0 * _a(x)
    v = np.asarray(v, dtype=float)
    val = np.where(np.abs(v) <= 1.0, np.abs(v) * _inv_sqrt(np.where(t > 0, t, 1.0)), PLUS_INF)
    return np.where(t > 0, val, np.where(v == 0, 0.0, PLUS_INF))


def ex3_H(t, x, p):
    return gamma(t, x) * _a(p)


def ex4_H(t, x, p):
    return _sqrt_kink(gamma(t, x) * _a(p))


def ex4_L(t, x, v):
    return _ratio_lagrangian(v, gamma(t, x))


def sec3_H(t, x, p):
    return np.maximum(_a(p) * _a(x) - 1.0, 0.0) + 0.0 * np.asarray(t, dtype=float)


def sec3_L(t, x, v):
    x = np.asarray(x, dtype=float) + 0.0 * np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(np.abs(v) <= ax, np.abs(v) / np.where(ax > 0, ax, 1.0), PLUS_INF)
    return np.where(ax > 0, val, np.where(v == 0, 0.0, PLUS_INF))


def rem29_H(t, x, p):
    t = np.asarray(t, dtype=float)
    tt = np.where(t > 0, t, 1.0)
    return np.where(t > 0, np.maximum(_a(p) / np.sqrt(tt) - 1.0 / tt, 0.0), 0.0 * _a(p))


# the transported-cusp pair: L charges |v| at a rate singular on the line x = t

def sec4_rate(t, x):
    """Cost per unit speed, 1/(2 sqrt|t-x| exp(2 sqrt|t-x|)); PLUS_INF on t = x."""
    s = np.abs(np.asarray(t, dtype=float) - np.asarray(x, dtype=float))
    r = np.sqrt(s)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(s > 0, 1.0 / (2.0 * np.where(s > 0, r, 1.0) * np.exp(2.0 * r)), PLUS_INF)


def sec4_L(t, x, v):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    on_line = (t - x) == 0
    a = sec4_rate(np.where(on_line, 0.0, t), np.where(on_line, 1.0, x))
    val = np.where(np.abs(v) <= 2.0, np.abs(v) * a, PLUS_INF)
    return np.where(on_line, np.where(v == 0, 0.0, PLUS_INF), val)


def sec4_H(t, x, p):
    """Closed-form conjugate of sec4_L: 2 max(|p| - rate, 0), and 0 on t = x."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    on_line = (t - x) == 0
    a = sec4_rate(np.where(on_line, 0.0, t), np.where(on_line, 1.0, x))
    return np.where(on_line, 0.0, 2.0 * np.maximum(_a(p) - a, 0.0))


def _sec4_G(s):
    # antiderivative in s = x - t of exp(-2 sqrt|s|)/(2 sqrt|s|)
    r = np.sqrt(np.abs(s))
    return np.where(s >= 0, -0.5 * np.exp(-2.0 * r), 0.5 * np.exp(-2.0 * r) - 1.0)


def sec4_segment_cost(t0, x0, v, dt):
    """Exact integral of sec4_L along x(tau) = x0 + v tau, tau in [0, dt]."""
    t0 = np.asarray(t0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    s0 = x0 - t0
    s1 = s0 + (v - 1.0) * dt
    unit = np.abs(v - 1.0) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.abs(v) / np.where(unit, 1.0, v - 1.0) * (_sec4_G(s1) - _sec4_G(s0))
    c = np.where(unit, dt * sec4_L(t0, x0, v), c)
    c = np.where(np.abs(v) > 2.0, PLUS_INF, c)
    return np.where(v == 0, 0.0, c)


def sec4_V(t, x, T=1.0):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    s = x - t
    r = np.sqrt(np.abs(s))
    out = np.where(s >= 0, np.exp(-2.0 * r) - 1.0, 1.0 - np.exp(-2.0 * r))
    return np.where((s < 0) & (x < 2.0 * t - T), 1.0, out)


def sec4_V_gradient(t, x, T=1.0):
    """(V_t, V_x) on the smooth part; None on the lines x = t and x = 2t - T."""
    t = float(t)
    x = float(x)
    s = x - t
    if s == 0 or x == 2 * t - T:
        return None
    if x < 2 * t - T:
        return (0.0, 0.0)
    r = math.sqrt(abs(s))
    e = math.exp(-2.0 * r) / r
    # both branches: V_t = e, V_x = -e
    return (e, -e)


def sec4_domain(t, x):
    return (0.0, 0.0) if t == x else (-2.0, 2.0)


# ---------------------------------------------------------------------------
# frozen / config models

def freeze_x(model: HamiltonianModel, x0: float = 0.0) -> HamiltonianModel:
    """The model with its state argument pinned: H(t, x, p) := H(t, x0, p)."""
    f = model.eval
    lag = None
    if model.lagrangian is not None:
        g = model.lagrangian.eval
        dom = model.lagrangian.domain
        lag = replace(model.lagrangian, name=model.lagrangian.name + f"@x={x0}",
                      eval=lambda t, x, v: g(t, x0 + 0.0 * np.asarray(x, dtype=float), v),
                      domain=(lambda t, x: dom(t, x0)) if dom else None,
                      segment_cost=None)
    return replace(model, name=f"{model.name}@x={x0}",
                   eval=lambda t, x, p: f(t, x0 + 0.0 * np.asarray(x, dtype=float), p),
                   known_kR=lambda R, t: 0.0, lagrangian=lag)


_EXPR_NAMES = {k: getattr(np, k) for k in
               ("abs", "sqrt", "exp", "log", "maximum", "minimum", "where", "sin", "cos", "pi", "inf")}
_EXPR_NAMES["max"] = np.maximum
_EXPR_NAMES["min"] = np.minimum


def model_from_spec(spec: dict):
    """Build a model from a JSON-style dict holding a numpy expression.

    ``{"kind": "hamiltonian", "expr": "max(abs(p)*abs(x)-1, 0)", "horizon": 1}``;
    Lagrangian expressions use ``v`` and may return ``inf``.
    """
    kind = spec.get("kind", "hamiltonian")
    expr = spec.get("expr")
    if not isinstance(expr, str):
        raise InvalidConfigError("model spec needs a string 'expr'")
    code = compile(expr, "<model expr>", "eval")
    names = set(code.co_names) - set(_EXPR_NAMES)
    allowed = {"t", "x", "p"} if kind == "hamiltonian" else {"t", "x", "v"}
    if names - allowed:
        raise InvalidConfigError(f"unknown names in expression: {sorted(names - allowed)}")
    var = "p" if kind == "hamiltonian" else "v"

    def ev(t, x, y):
        env = dict(_EXPR_NAMES)
        env.update(t=np.asarray(t, dtype=float), x=np.asarray(x, dtype=float))
        env[var] = np.asarray(y, dtype=float)
        out = eval(code, {"__builtins__": {}}, env)
        return np.asarray(out, dtype=float) * np.ones(np.broadcast(env["t"], env["x"], env[var]).shape)

    name = spec.get("name", "config")
    T = float(spec.get("horizon", 1.0))
    if kind == "hamiltonian":
        return HamiltonianModel(name, 1, T, ev, description=expr)
    if kind == "lagrangian":
        box = spec.get("velocity_box")
        dom = (lambda t, x: tuple(box)) if box else None
        return LagrangianModel(name, 1, T, ev, domain=dom, description=expr)
    raise InvalidConfigError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# registry

def _const(c):
    return lambda *args: float(c)


def _build(name: str):
    inv = lambda t: float(_inv_sqrt(t))  # noqa: E731
    if name == "ex1":
        L = LagrangianModel("ex1-L", 1, 1.0, ex1_L, domain=lambda t, x: (-abs(x), abs(x)),
                            known_CR=lambda R: float(R), known_c=_const(1.0))
        return HamiltonianModel("ex1", 1, 1.0, ex1_H, known_c=_const(1.0), known_kR=_const(1.0),
                                known_CR=lambda R: float(R), lagrangian=L,
                                description="(sqrt|xp|-1)^2 for |xp|>1, else 0")
    if name == "ex2":
        L = LagrangianModel("ex2-L", 1, 1.0, ex2_L,
                            domain=lambda t, x: (-1.0, 1.0) if t > 0 else (0.0, 0.0),
                            known_CR=_const(1.0), known_c=_const(1.0))
        return HamiltonianModel("ex2", 1, 1.0, ex2_H, known_c=_const(1.0), known_kR=_const(0.0),
                                known_CR=_const(1.0), lagrangian=L,
                                known_lambda=lambda t, x: inv(t) if t > 0 else 0.0,
                                description="max(|p|-1/sqrt(t), 0)")
    if name == "ex3-gamma":
        return HamiltonianModel("ex3-gamma", 1, 1.0, ex3_H,
                                known_c=lambda t: inv(t) + 1.0,
                                known_kR=lambda R, t: 3.0 * inv(t),
                                known_CR=lambda R: R * R / 4.0 + 1.0 + R,
                                description="gamma(t,x)|p| with gamma = alpha + beta")
    if name in ("ex4", "ex5-fl-check"):
        L = LagrangianModel("ex4-L", 1, 1.0, ex4_L,
                            domain=lambda t, x: (-float(gamma(t, x)), float(gamma(t, x))),
                            known_CR=lambda R: R * R / 4.0 + 1.0 + R,
                            known_c=lambda t: inv(t) + 1.0)
        ctrl = None
        if name == "ex5-fl-check":
            ctrl = {"M": 2,
                    "f": lambda t, x, a1, a2: a1 * gamma(t, x) / (1.0 + np.abs(a1)),
                    "l": lambda t, x, a1, a2: np.abs(a1) + np.abs(a2) + gamma(t, x) * np.abs(a2) / (1.0 + np.abs(a2))}
        return HamiltonianModel(name, 1, 1.0, ex4_H,
                                known_c=lambda t: inv(t) + 1.0,
                                known_kR=lambda R, t: 3.0 * inv(t),
                                known_CR=lambda R: R * R / 4.0 + 1.0 + R,
                                lagrangian=L, control=ctrl,
                                description="(sqrt(gamma|p|)-1)^2 for gamma|p|>1, else 0")
    if name == "ex5-fl-hat":
        base = _build("ex1")
        ctrl = {"M": 2,
                "f": lambda t, x, a1, a2: a1 * np.abs(x) / (1.0 + np.abs(a1)),
                "l": lambda t, x, a1, a2: np.abs(a1) + np.abs(a2) + np.abs(x * a2) / (1.0 + np.abs(a2))}
        return replace(base, name="ex5-fl-hat", control=ctrl)
    if name == "sec3":
        L = LagrangianModel("sec3-L", 1, 1.0, sec3_L, domain=lambda t, x: (-abs(x), abs(x)),
                            known_CR=lambda R: float(R), known_c=_const(1.0))
        return HamiltonianModel("sec3", 1, 1.0, sec3_H, known_c=_const(1.0), known_kR=_const(1.0),
                                known_CR=lambda R: float(R), lagrangian=L,
                                known_lambda=lambda t, x: abs(x) + 1.0, known_theta=_const(1.0),
                                known_zetaR=_const(1.0), description="max(|p||x|-1, 0)")
    if name in ("sec4-L", "sec4-H"):
        H = HamiltonianModel("sec4-H", 1, 1.0, sec4_H, description="closed-form conjugate of sec4-L")
        L = LagrangianModel("sec4-L", 1, 1.0, sec4_L, domain=sec4_domain,
                            segment_cost=sec4_segment_cost, hamiltonian=H,
                            known_CR=_const(2.0), known_c=_const(2.0),
                            description="|v|/(2 sqrt|t-x| exp(2 sqrt|t-x|)) on |v|<=2")
        return L if name == "sec4-L" else replace(H, lagrangian=L)
    if name == "sec4-V":
        return ValueModel("sec4-V", 1.0, sec4_V, sec4_V_gradient, lagrangian=_build("sec4-L"),
                          description="exp(-2 sqrt(x-t))-1 / 1-exp(-2 sqrt(t-x)) / 1")
    if name == "rem29":
        return HamiltonianModel("rem29", 1, 1.0, rem29_H, known_c=lambda t: inv(t),
                                known_kR=_const(0.0), description="max(|p|/sqrt(t) - 1/t, 0)")
    raise UnknownModelError(name)


REGISTRY = ("ex1", "ex2", "ex3-gamma", "ex4", "ex5-fl-hat", "ex5-fl-check",
            "sec3", "sec4-L", "sec4-V", "rem29")


def builtin(name: str):
    """Look up a registered model by name."""
    if name not in REGISTRY and name != "sec4-H":
        raise UnknownModelError(f"unknown model {name!r}; known: {', '.join(REGISTRY)}")
    return _build(name)


def control_hamiltonian(model: HamiltonianModel, t, x, p, n: int = 401, radius: float = 200.0):
    """sup over a sampled control grid of <p, f> - l for a registered control system."""
    if not model.control:
        raise ValueError(f"{model.name} has no attached control system")
    # the sup in a1 concentrates near |a1| ~ sqrt|p x|; a geometric grid resolves it
    g = np.geomspace(1e-6, radius, n)
    a1 = np.concatenate([-g[::-1], [0.0], g])
    a2 = np.concatenate([-g[::-1], [0.0], g])
    A1, A2 = np.meshgrid(a1, a2, indexing="ij")
    f = model.control["f"](t, x, A1, A2)
    l = model.control["l"](t, x, A1, A2)
    return float(np.max(p * f - l))


# ---------------------------------------------------------------------------
# sampling helpers

@dataclass(frozen=True)
class SamplerConfig:
    samples: int = 64
    R_list: tuple = (1.0, 2.0)
    tolerance: float = 1e-6
    seed: int = 0
    ladder_levels: int = LADDER_LEVELS
    p_radius: float = 8.0
    p_nodes: int = 513

    @classmethod
    def from_dict(cls, d: dict | None) -> "SamplerConfig":
        d = dict(d or {})
        d.pop("model", None)
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise InvalidConfigError(f"unknown sampler keys: {sorted(bad)}")
        if "R_list" in d:
            d["R_list"] = tuple(float(r) for r in d["R_list"])
        cfg = cls(**d)
        if cfg.samples < 1 or cfg.ladder_levels < 2 or cfg.tolerance <= 0 or not cfg.R_list:
            raise InvalidConfigError("samples >= 1, ladder_levels >= 2, tolerance > 0 and a non-empty R_list are required")
        return cfg

    def to_dict(self):
        return {"samples": self.samples, "R_list": list(self.R_list), "tolerance": self.tolerance,
                "seed": self.seed, "ladder_levels": self.ladder_levels,
                "p_radius": self.p_radius, "p_nodes": self.p_nodes}


def sample_tx(T: float, R: float, n: int, seed: int, t_lo: float = 0.0) -> np.ndarray:
    """Scrambled Sobol points in (t_lo, T] x [-R, R]."""
    m = max(1, math.ceil(math.log2(max(n, 2))))
    pts = qmc.Sobol(d=2, scramble=True, seed=seed).random_base2(m)[:n]
    t = t_lo + (T - t_lo) * pts[:, 0]
    x = R * (2.0 * pts[:, 1] - 1.0)
    return np.column_stack([t, x])


def _growth(seq) -> float:
    seq = [float(s) for s in seq]
    if seq[0] <= 0:
        return math.inf if seq[-1] > 0 else 1.0
    return seq[-1] / seq[0]


def _diverges(seq) -> bool:
    """Growth by GROWTH_FACTOR over the last three ladder levels (four values)."""
    tail = list(seq)[-4:]
    return _growth(tail) >= GROWTH_FACTOR and all(b >= a for a, b in zip(tail, tail[1:]))


def _time_ladder(T: float, levels: int, base: float = 0.125):
    """Times approaching both ends of [0, T] geometrically."""
    d = base * T * 4.0 ** -np.arange(levels)
    return d, T - d


def _slope_sup(model, t, x, P, n):
    p = np.linspace(-P, P, n)
    h = model.eval(t, x, p)
    return float(np.max(np.abs(np.diff(h)) / (p[1] - p[0]))), p


# ---------------------------------------------------------------------------
# (H1)-(H5)

def check_H(model: HamiltonianModel, which: str, sampler: SamplerConfig | dict | None = None) -> ConditionReport:
    cfg = sampler if isinstance(sampler, SamplerConfig) else SamplerConfig.from_dict(sampler)
    which = which.upper().strip("()")
    fn = {"H1": _check_H1, "H2": _check_H2, "H3": _check_H3, "H4": _check_H4, "H5": _check_H5}.get(which)
    if fn is None:
        raise InvalidConfigError(f"unknown condition {which!r}")
    rep = fn(model, cfg)
    rep.seed = cfg.seed
    return rep


def _pts(model, cfg, R, salt=0):
    return sample_tx(model.horizon, R, cfg.samples, cfg.seed + salt)


def _check_H1(model, cfg):
    # continuity modulus: shrinking perturbations of (t,x,p) must shrink |dH|
    rng = np.random.default_rng(cfg.seed)
    worst = []
    wit = []
    for R in cfg.R_list:
        tx = _pts(model, cfg, R, 1)
        p = rng.uniform(-cfg.p_radius, cfg.p_radius, len(tx))
        dirs = rng.normal(size=(len(tx), 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        base = model.eval(tx[:, 0], tx[:, 1], p)
        level = []
        for k in range(cfg.ladder_levels):
            d = 1e-3 * 10.0 ** -k
            tt = np.clip(tx[:, 0] + d * dirs[:, 0], 0.0, model.horizon)
            jump = np.abs(model.eval(tt, tx[:, 1] + d * dirs[:, 1], p + d * dirs[:, 2]) - base)
            level.append(float(np.max(jump)))
            if k == cfg.ladder_levels - 1:
                i = int(np.argmax(jump))
                wit.append({"t": float(tx[i, 0]), "x": float(tx[i, 1]), "p": float(p[i]),
                            "jump": float(jump[i]), "delta": d})
        worst.append(level)
    last = max(w[-1] for w in worst)
    est = {"modulus_by_level": worst}
    if last >= max(cfg.tolerance, 1e-3):
        return ConditionReport("(H1)", "fail", [max(wit, key=lambda w: w["jump"])], est,
                               notes="jump persists as the perturbation shrinks")
    return ConditionReport("(H1)", "inconclusive", wit, est,
                           notes="no jump found; sampling cannot prove continuity")


def _check_H2(model, cfg):
    rng = np.random.default_rng(cfg.seed)
    worst = -math.inf
    wit = None
    for R in cfg.R_list:
        tx = _pts(model, cfg, R, 2)
        for _ in range(8):
            p = rng.uniform(-cfg.p_radius, cfg.p_radius, len(tx))
            q = rng.uniform(-cfg.p_radius, cfg.p_radius, len(tx))
            t, x = tx[:, 0], tx[:, 1]
            gap = model.eval(t, x, 0.5 * (p + q)) - 0.5 * (model.eval(t, x, p) + model.eval(t, x, q))
            scale = 1.0 + np.abs(model.eval(t, x, p)) + np.abs(model.eval(t, x, q))
            rel = gap / scale
            i = int(np.argmax(rel))
            if rel[i] > worst:
                worst = float(rel[i])
                wit = {"t": float(t[i]), "x": float(x[i]), "p": float(p[i]), "q": float(q[i]),
                       "midpoint_gap": float(gap[i])}
    verdict = "fail" if worst > cfg.tolerance else "pass"
    return ConditionReport("(H2)", verdict, [wit] if wit else [], {"max_relative_midpoint_gap": worst})


def _check_H3(model, cfg):
    levels = cfg.ladder_levels
    per_R = {}
    wit = []
    failed = False
    t_lo, t_hi = _time_ladder(model.horizon, levels)
    for R in cfg.R_list:
        xs = np.linspace(-R, R, 9)
        est = []
        for k in range(levels):
            P = cfg.p_radius * 4.0 ** k
            ts = np.concatenate([_pts(model, cfg, R, 3)[:, 0], [t_lo[k], t_hi[k]]])
            ts = ts[(ts >= t_lo[k]) & (ts <= t_hi[k])]
            best = (0.0, None)
            for t in ts:
                for x in xs:
                    s, p = _slope_sup(model, t, x, P, cfg.p_nodes)
                    if s > best[0]:
                        best = (s, (float(t), float(x)))
            est.append(best[0])
            if k == levels - 1 and best[1]:
                w = {"R": R, "t": best[1][0], "x": best[1][1], "p_radius": P, "slope": best[0]}
        per_R[R] = est
        if _diverges(est):
            failed = True
            wit.append(w)
        elif model.known_CR is not None:
            cr = model.known_CR(R)
            if max(est) > cr * (1 + 1e-6) + cfg.tolerance:
                failed = True
                wit.append(dict(w, known_CR=cr))
    est = {"C_R_hat_by_level": {str(k): v for k, v in per_R.items()},
           "C_R_hat": {str(k): max(v) for k, v in per_R.items()}}
    if failed:
        return ConditionReport("(H3)", "fail", wit, est, notes="Lipschitz quotient in p grows along the ladder")
    return ConditionReport("(H3)", "pass", [], est)


def _check_H4(model, cfg):
    worst, wit, env = -math.inf, None, 0.0
    for R in cfg.R_list:
        for t, x in _pts(model, cfg, R, 4):
            s, _ = _slope_sup(model, t, x, cfg.p_radius, cfg.p_nodes)
            q = s / (1.0 + abs(x))
            env = max(env, q)
            if model.known_c is not None:
                r = q - model.known_c(t)
                if r > worst:
                    worst, wit = r, {"t": float(t), "x": float(x), "quotient": q, "c(t)": model.known_c(t)}
    est = {"c_hat": env}
    if model.known_c is None:
        return ConditionReport("(H4)", "inconclusive", [], est, notes="no known c(t) to test against")
    est["max_excess"] = worst
    if worst > cfg.tolerance:
        return ConditionReport("(H4)", "fail", [wit], est)
    return ConditionReport("(H4)", "pass", [], est)


def _check_H5(model, cfg):
    rng = np.random.default_rng(cfg.seed + 5)
    worst, wit, env = -math.inf, None, 0.0
    p = np.linspace(-cfg.p_radius, cfg.p_radius, 129)
    for R in cfg.R_list:
        for t, x in _pts(model, cfg, R, 5):
            for d in (1e-2, 1e-3):
                y = float(np.clip(x + d * rng.choice([-1.0, 1.0]), -R, R))
                if y == x:
                    continue
                q = np.abs(model.eval(t, x, p) - model.eval(t, y, p)) / ((1.0 + np.abs(p)) * abs(x - y))
                i = int(np.argmax(q))
                env = max(env, float(q[i]))
                if model.known_kR is not None:
                    r = float(q[i]) - model.known_kR(R, t)
                    if r > worst:
                        worst, wit = r, {"R": R, "t": float(t), "x": float(x), "y": y, "p": float(p[i]),
                                         "quotient": float(q[i]), "k_R(t)": model.known_kR(R, t)}
    est = {"k_R_hat": env}
    if model.known_kR is None:
        return ConditionReport("(H5)", "inconclusive", [], est, notes="no known k_R(t) to test against")
    est["max_excess"] = worst
    if worst > cfg.tolerance:
        return ConditionReport("(H5)", "fail", [wit], est)
    return ConditionReport("(H5)", "pass", [], est)


def check_all_H(model, sampler=None) -> dict[str, ConditionReport]:
    return {c: check_H(model, c, sampler) for c in ("H1", "H2", "H3", "H4", "H5")}


# ---------------------------------------------------------------------------
# condition (A)

def lagrangian_slice(model: HamiltonianModel, t, x, radius: float = 64.0, count: int = 2001,
                     target_radius: float | None = None, target_count: int | None = None):
    """Numerical conjugate L(t,x,.) of a Hamiltonian model with recession-based domain."""
    if target_radius is None:
        up = max(abs(float(model.eval(t, x, 1e12)) / 1e12), 1e-3)
        target_radius = 1.05 * up
    plan = ConjugatePlan.symmetric(radius, count, target_radius, target_count or count)
    return conjugate_hamiltonian_slice(model, t, x, plan)


def _lambda_parts(g, include_suspect=True):
    v = g.grid.axes[0].nodes()
    fin = np.isfinite(g.values)
    dn, up = g.meta["domain"]
    dom_norm = max(abs(dn), abs(up))
    mask = fin if include_suspect else fin & ~np.asarray(g.meta["suspect"])
    sup_l = float(np.max(np.abs(g.values[mask]))) if mask.any() else 0.0
    return dom_norm, sup_l


def check_condition_A(model: HamiltonianModel, plan: ConjugatePlan | None = None,
                      sampler: SamplerConfig | dict | None = None) -> ConditionReport:
    """Sampled test of ||dom L|| <= lambda and ||L(dom L)|| <= lambda for a continuous lambda.

    Fails when either quantity blows up along a time ladder toward an endpoint of
    [0, T] or when sup L keeps growing as the dual truncation radius grows (a
    Lagrangian unbounded near the edge of its domain).  Suspect nodes enter sup L
    as lower bounds.
    """
    cfg = sampler if isinstance(sampler, SamplerConfig) else SamplerConfig.from_dict(sampler)
    radius = plan.radius if plan is not None else 64.0
    count = plan.source.count if plan is not None else 2001
    T = model.horizon
    wit, est = [], {}
    lam_hat = []
    excess = -math.inf
    for R in cfg.R_list:
        for t, x in sample_tx(T, R, cfg.samples, cfg.seed + 11):
            g = lagrangian_slice(model, t, x, radius, count)
            dn, sl = _lambda_parts(g)
            lh = max(dn, sl)
            lam_hat.append({"t": float(t), "x": float(x), "dom_norm": dn, "sup_abs_L": sl, "lambda_hat": lh})
            if model.known_lambda is not None:
                excess = max(excess, lh - model.known_lambda(t, x))
    est["samples"] = lam_hat
    failed = False
    top = max(lam_hat, key=lambda r: r["lambda_hat"])
    # radius ladder at the worst sample: sup L near the edge of dom L
    radii = [radius * 4.0 ** k for k in range(cfg.ladder_levels)]
    sups = [_lambda_parts(lagrangian_slice(model, top["t"], top["x"], r, count))[1] for r in radii]
    est["radius_ladder"] = {"t": top["t"], "x": top["x"], "radii": radii, "sup_abs_L": sups}
    if _diverges(sups):
        failed = True
        wit.append({"kind": "sup L diverges toward the domain boundary", "t": top["t"], "x": top["x"],
                    "radii": radii, "sup_abs_L": sups})
    # time ladders toward both ends of [0, T] at the worst sample's x
    t_lo, t_hi = _time_ladder(T, cfg.ladder_levels)
    for label, ts in (("t->0", t_lo), ("t->T", t_hi)):
        seq = [max(_lambda_parts(lagrangian_slice(model, t, top["x"], radius, count))) for t in ts]
        est[f"time_ladder_{label}"] = {"x": top["x"], "t": ts.tolist(), "lambda_hat": seq}
        if _diverges(seq):
            failed = True
            wit.append({"kind": f"lambda_hat unbounded as {label}", "x": top["x"], "t": ts.tolist(),
                        "lambda_hat": seq})
    if model.known_lambda is not None:
        est["max_excess_over_known_lambda"] = excess
        if excess > cfg.tolerance + 1e-9 and not failed:
            failed = True
            worst = max(lam_hat, key=lambda r: r["lambda_hat"] - model.known_lambda(r["t"], r["x"]))
            wit.append(dict(worst, kind="lambda_hat exceeds known lambda"))
    est["lambda_hat_max"] = top["lambda_hat"]
    return ConditionReport("(A)", "fail" if failed else "pass", wit, est, seed=cfg.seed)


# ---------------------------------------------------------------------------
# (L6) <-> (H5) transfer

def _lagrangian_evaluator(model: HamiltonianModel):
    if model.lagrangian is not None:
        return model.lagrangian.eval
    from .extreal import interp_many

    def ev(t, x, v):
        g = lagrangian_slice(model, t, x)
        out = interp_many(g, np.atleast_1d(v), strict=False)
        lo, hi = g.grid.axes[0].lower, g.grid.axes[0].upper
        v = np.atleast_1d(v)
        return np.where((v < lo) | (v > hi), PLUS_INF, out)
    return ev


def check_L6_transfer(model: HamiltonianModel, sampler: SamplerConfig | dict | None = None,
                      n_v: int = 41, n_w: int = 601) -> ConditionReport:
    """Empirical (L6) modulus versus the direct (H5) quotient on a |x-y| ladder.

    For v in dom L(t,x,.) the best transfer w in dom L(t,y,.) minimizes
    max(|w-v|, L(t,y,w) - L(t,x,v)); the search runs over w = v + |x-y| u with
    u in [-3, 3], so the resolution scales with |x-y|.
    """
    cfg = sampler if isinstance(sampler, SamplerConfig) else SamplerConfig.from_dict(sampler)
    L = _lagrangian_evaluator(model)
    rng = np.random.default_rng(cfg.seed + 6)
    deltas = [0.1 * 4.0 ** -k for k in range(cfg.ladder_levels)]
    p = np.linspace(-cfg.p_radius, cfg.p_radius, 257)
    u = np.linspace(-3.0, 3.0, n_w)
    per_R = {}
    wit = []
    failed = False
    for R in cfg.R_list:
        tx = sample_tx(model.horizon, R, max(8, cfg.samples // 4), cfg.seed + 7)
        kl, kh = [], []
        for d in deltas:
            best_l, best_h = 0.0, 0.0
            for t, x in tx:
                if t <= 0:
                    continue
                y = float(np.clip(x + d * rng.choice([-1.0, 1.0]), -R, R))
                if y == x:
                    y = x - d if x - d >= -R else x + d
                dxy = abs(x - y)
                hq = np.abs(model.eval(t, x, p) - model.eval(t, y, p)) / ((1.0 + np.abs(p)) * dxy)
                best_h = max(best_h, float(np.max(hq)))
                vbox = _domain_box(model, t, x)
                vs = np.linspace(vbox[0], vbox[1], n_v) if vbox[1] > vbox[0] else np.array([vbox[0]])
                lx = np.asarray(L(t, x, vs), dtype=float) * np.ones(len(vs))
                vs, lx = vs[np.isfinite(lx)], lx[np.isfinite(lx)]
                if vs.size == 0:
                    continue
                W = vs[:, None] + dxy * u[None, :]
                ly = np.asarray(L(t, y, W), dtype=float) * np.ones(W.shape)
                cost = np.maximum(np.abs(W - vs[:, None]), ly - lx[:, None])
                q = np.min(cost, axis=1) / dxy
                best_l = max(best_l, float(np.max(q)))
            kl.append(best_l)
            kh.append(best_h)
        per_R[str(R)] = {"delta": deltas, "k_hat_L6": kl, "k_hat_H5": kh}
        dl, dh = _diverges(kl), _diverges(kh)
        if dl != dh:
            failed = True
            wit.append({"R": R, "delta": deltas, "k_hat_L6": kl, "k_hat_H5": kh,
                        "diverging_side": "L6" if dl else "H5"})
    return ConditionReport("(L6)", "fail" if failed else "pass", wit, {"envelopes": per_R}, seed=cfg.seed)


def _domain_box(model: HamiltonianModel, t, x):
    if model.lagrangian is not None and model.lagrangian.domain is not None:
        lo, hi = model.lagrangian.domain(t, x)
    else:
        up = float(model.eval(t, x, 1e12)) / 1e12
        dn = -float(model.eval(t, x, -1e12)) / 1e12
        lo, hi = dn, up
    # stay strictly inside open domains
    shrink = 1e-3 * (hi - lo)
    return lo + shrink, hi - shrink


# ---------------------------------------------------------------------------
# printed conjugate pairs

PAIR_POINTS = ((0.5, 2.0), (0.5, 0.5), (0.25, -1.5), (0.8, 1.0))


def conjugate_pair_fidelity(name: str, points=PAIR_POINTS, count: int = 2001, radius: float = 64.0) -> dict:
    """Discrete conjugate of one member of a printed (H, L) pair against the other.

    Hamiltonian models are conjugated on a symmetric p grid and compared with
    their printed Lagrangian on the interior finite, non-suspect nodes; the
    Lagrangian sec4-L is conjugated over its domain box and compared with its
    printed Hamiltonian.  The tolerance is three cells of the dual grid.
    """
    from .extreal import Axis, Grid, GridFn
    from .transform import conjugate_slice
    m = builtin(name)
    rows = []
    for t, x in points:
        if isinstance(m, LagrangianModel):
            lo, hi = m.domain(t, x)
            pr = max(radius, 1.0)
            if hi > lo:
                src = Axis(lo, hi, count, "v")
                vals = m.eval(t, x, src.nodes())
            else:
                src = Axis(lo - 1.0, lo + 1.0, 3, "v")
                vals = np.array([PLUS_INF, float(m.eval(t, x, lo)), PLUS_INF])
            plan = ConjugatePlan(src, Axis(-pr, pr, count, "p"), truncated=False)
            g = conjugate_slice(GridFn(Grid((src,)), vals), plan)
            ref = m.hamiltonian.eval(t, x, plan.target.nodes())
            err = float(np.max(np.abs(g.values - ref)))
            cell = src.spacing if hi > lo else 0.0
            dom_err = 0.0
            h_tol = 3.0 * max(src.spacing, plan.target.spacing) if hi > lo else 1e-12
        else:
            g = lagrangian_slice(m, t, x, radius, count)
            v = g.grid.axes[0].nodes()
            ref = np.asarray(m.lagrangian.eval(t, x, v), dtype=float) * np.ones(v.shape)
            mask = np.isfinite(g.values) & np.isfinite(ref) & ~np.asarray(g.meta["suspect"], dtype=bool)
            mask[1:-1] &= mask[:-2] & mask[2:]
            mask[[0, -1]] = False
            err = float(np.max(np.abs(g.values[mask] - ref[mask]))) if mask.any() else 0.0
            cell = g.grid.axes[0].spacing
            lo, hi = m.lagrangian.domain(t, x)
            fin = np.flatnonzero(np.isfinite(g.values))
            dom_err = math.inf if fin.size == 0 else max(abs(v[fin[0]] - lo), abs(v[fin[-1]] - hi))
            h_tol = 3.0 * max(cell, 2.0 * radius / (count - 1))
        rows.append({"t": float(t), "x": float(x), "sup_error": err, "tolerance": h_tol,
                     "domain_error": float(dom_err), "cell": float(cell),
                     "pass": bool(err <= h_tol and dom_err <= cell + 1e-12)})
    return {"model": name, "points": rows, "pass": all(r["pass"] for r in rows)}
