"""Extended-real arithmetic and rectangular grid containers.

PLUS_INF and MINUS_INF are the IEEE infinities.  They are first-class values,
never large finite sentinels, and the helpers below refuse the one undefined
operation (``+inf + -inf``) instead of silently producing NaN.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

PLUS_INF = math.inf
MINUS_INF = -math.inf


class ExtRealError(ArithmeticError):
    """Raised on the undefined sum PLUS_INF + MINUS_INF."""


class ImproperFunctionError(ValueError):
    """A function that should be proper takes MINUS_INF or is identically PLUS_INF."""


class OutOfDomainError(ValueError):
    """Evaluation point lies outside the grid's bounding box."""


def ext_add(a, b):
    """Elementwise extended-real sum that rejects inf + (-inf)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    bad = (np.isposinf(a) & np.isneginf(b)) | (np.isneginf(a) & np.isposinf(b))
    if np.any(bad):
        raise ExtRealError("PLUS_INF + MINUS_INF is undefined")
    out = a + b
    return out if out.ndim else float(out)


def format_ext(x: float) -> str:
    if x == PLUS_INF:
        return "inf"
    if x == MINUS_INF:
        return "-inf"
    return repr(float(x))


def parse_ext(s: str) -> float:
    s = s.strip().lower()
    if s in ("inf", "+inf"):
        return PLUS_INF
    if s == "-inf":
        return MINUS_INF
    return float(s)


@dataclass(frozen=True)
class Axis:
    lower: float
    upper: float
    count: int
    name: str = "x"

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"axis {self.name!r} needs at least 2 nodes, got {self.count}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("axis bounds must be finite")
        if not self.upper > self.lower:
            raise ValueError(f"axis {self.name!r} has non-positive spacing")

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.count - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.count)


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not self.axes:
            raise ValueError("grid needs at least one axis")

    @classmethod
    def uniform(cls, bounds: Sequence[tuple[float, float]], counts: Sequence[int],
                names: Sequence[str] | None = None) -> "Grid":
        names = names or [f"x{i}" for i in range(len(bounds))]
        return cls(tuple(Axis(float(lo), float(hi), int(n), nm)
                         for (lo, hi), n, nm in zip(bounds, counts, names)))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a.spacing for a in self.axes])

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def nodes(self, i: int) -> np.ndarray:
        return self.axes[i].nodes()

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[a.nodes() for a in self.axes], indexing="ij")

    def contains(self, point, atol: float = 1e-12) -> bool:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return all(a.lower - atol <= q <= a.upper + atol for a, q in zip(self.axes, p))


@dataclass(frozen=True)
class GridFn:
    """Extended-real function sampled on a :class:`Grid` (values in C order)."""

    grid: Grid
    values: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != int(np.prod(self.grid.shape)):
            raise ValueError(f"expected {np.prod(self.grid.shape)} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if np.isnan(v).any():
            raise ValueError("NaN is not an extended real")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, fn, meta=None) -> "GridFn":
        return cls(grid, fn(*grid.mesh()), dict(meta or {}))

    @property
    def proper(self) -> bool:
        return bool(not np.isneginf(self.values).any() and np.isfinite(self.values).any())

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def with_values(self, values, **meta) -> "GridFn":
        m = dict(self.meta)
        m.update(meta)
        return GridFn(self.grid, values, m)

    def __call__(self, point) -> float:
        return eval_interp(self, point)

    # serialization -----------------------------------------------------

    def to_rows(self) -> list[list[str]]:
        idx = np.indices(self.grid.shape).reshape(self.grid.ndim, -1).T
        coords = [a.nodes() for a in self.grid.axes]
        flat = self.values.ravel()
        rows = []
        for k, ii in enumerate(idx):
            rows.append([str(int(i)) for i in ii]
                        + [repr(float(coords[d][i])) for d, i in enumerate(ii)]
                        + [format_ext(flat[k])])
        return rows

    def header(self) -> list[str]:
        names = self.grid.names
        return [f"i_{n}" for n in names] + list(names) + ["value"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        w.writerows(self.to_rows())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_dict(self) -> dict:
        return {
            "axes": [{"name": a.name, "lower": a.lower, "upper": a.upper, "count": a.count}
                     for a in self.grid.axes],
            "header": self.header(),
            "rows": self.to_rows(),
            "meta": _jsonable(self.meta),
        }

    @classmethod
    def from_json(cls, text: str) -> "GridFn":
        d = json.loads(text)
        grid = Grid(tuple(Axis(a["lower"], a["upper"], a["count"], a["name"]) for a in d["axes"]))
        vals = [parse_ext(r[-1]) for r in d["rows"]]
        return cls(grid, np.array(vals), d.get("meta", {}))

    @classmethod
    def from_csv(cls, text: str, grid: Grid) -> "GridFn":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != [f"i_{n}" for n in grid.names] + list(grid.names) + ["value"]:
            raise ValueError("CSV header does not match grid")
        vals = np.empty(grid.shape)
        d = grid.ndim
        for r in rows[1:]:
            vals[tuple(int(i) for i in r[:d])] = parse_ext(r[-1])
        return cls(grid, vals)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else format_ext(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def jsonable(obj):
    """Convert numpy scalars/arrays and infinities into JSON-safe values."""
    return _jsonable(obj)


def _locate(grid: Grid, pts: np.ndarray, strict: bool):
    """Cell index and barycentric weight per axis for an (n, d) array of points."""
    lo = np.array([a.lower for a in grid.axes])
    hi = np.array([a.upper for a in grid.axes])
    h = grid.spacing
    if strict:
        tol = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
        bad = (pts < lo - tol) | (pts > hi + tol)
        if bad.any():
            raise OutOfDomainError(f"point {pts[np.argmax(bad.any(axis=1))]} outside grid")
    pts = np.clip(pts, lo, hi)
    r = (pts - lo) / h
    # linspace nodes need not divide exactly; snap so node hits are exact
    ri = np.rint(r)
    r = np.where(np.abs(r - ri) <= 1e-10, ri, r)
    n = np.array(grid.shape)
    k = np.clip(np.floor(r).astype(int), 0, n - 2)
    w = np.clip(r - k, 0.0, 1.0)
    return k, w


def interp_many(f: GridFn, points, strict: bool = True) -> np.ndarray:
    """Vectorized multilinear interpolation; PLUS_INF at any corner absorbs.

    ``points`` has shape (n, d) (or (n,) on a 1-D grid).  With ``strict=False``
    points are clamped onto the bounding box instead of raising.
    """
    grid = f.grid
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and grid.ndim == 1:
        pts = pts[:, None]
    pts = np.atleast_2d(pts)
    k, w = _locate(grid, pts, strict)
    vals = f.values
    out = np.zeros(len(pts))
    inf_hit = np.zeros(len(pts), dtype=bool)
    d = grid.ndim
    for corner in range(2 ** d):
        bits = [(corner >> i) & 1 for i in range(d)]
        idx = tuple(k[:, i] + bits[i] for i in range(d))
        wt = np.ones(len(pts))
        for i in range(d):
            wt = wt * (w[:, i] if bits[i] else 1.0 - w[:, i])
        cv = vals[idx]
        if np.isneginf(cv).any():
            raise ImproperFunctionError("MINUS_INF encountered during interpolation")
        # corners with zero weight (exact node hits) must not leak PLUS_INF in
        inf_hit |= np.isposinf(cv) & (wt > 0.0)
        out += np.where(np.isfinite(cv), cv, 0.0) * wt
    return np.where(inf_hit, PLUS_INF, out)


def eval_interp(f: GridFn, point) -> float:
    """Multilinear interpolation of ``f`` at ``point`` (strict bounding box)."""
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if p.shape != (f.grid.ndim,):
        raise ValueError(f"point must have {f.grid.ndim} coordinates")
    return float(interp_many(f, p[None, :], strict=True)[0])


def lsc_regularize(f: GridFn) -> GridFn:
    """Return ``f`` after checking it is proper (no MINUS_INF, some finite value)."""
    if np.isneginf(f.values).any():
        raise ImproperFunctionError("MINUS_INF value: function is not proper")
    if not np.isfinite(f.values).any():
        raise ImproperFunctionError("identically PLUS_INF: function is not proper")
    return f.with_values(f.values, proper=True)
