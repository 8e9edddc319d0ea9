"""Optional PNG figures for ``report-all --figures``; needs the ``plot`` extra."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np


def _mpl():
    try:
        import matplotlib
    except ImportError as e:  # pragma: no cover - depends on the environment
        raise RuntimeError("figures need matplotlib: pip install 'lschjb[plot]'") from e
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _png(fig) -> bytes:
    buf = io.BytesIO()
    # no metadata, so identical inputs give identical bytes
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    return buf.getvalue()


def render_report(root: Path, seed: int = 0) -> dict[str, bytes]:
    from .acceptance import START, sec4_field
    from .models import builtin, sec4_V
    from .reduction import barron_jensen_hbar
    from .valuefn import extract_trajectory
    from .viability import build_eps_approx

    plt = _mpl()
    out = {}
    field, _ = sec4_field(201, 401)
    ts = field.value.grid.nodes(0)
    xs = field.value.grid.nodes(1)
    TT, XX = np.meshgrid(ts, xs, indexing="ij")

    fig, ax = plt.subplots(1, 2, figsize=(10, 4))
    im = ax[0].pcolormesh(XX, TT, field.value.values, shading="auto")
    fig.colorbar(im, ax=ax[0])
    ax[0].set(xlabel="x", ylabel="t", title="DP value field")
    im = ax[1].pcolormesh(XX, TT, np.abs(field.value.values - sec4_V(TT, XX)), shading="auto")
    fig.colorbar(im, ax=ax[1])
    ax[1].set(xlabel="x", ylabel="t", title="|DP - closed form|")
    out["value_field.png"] = _png(fig)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4))
    rng = np.random.default_rng(seed)
    for _ in range(8):
        j = int(rng.integers(0, 200))
        tr = extract_trajectory(field, (field.times[j], float(rng.uniform(-2, 2))))
        ax.plot(tr.x, tr.t, lw=1)
    ax.plot(xs, np.clip(xs, 0, 1), "k--", lw=0.8)
    ax.set(xlabel="x", ylabel="t", title="extracted trajectories", xlim=(-2, 2), ylim=(0, 1))
    out["trajectories.png"] = _png(fig)
    plt.close(fig)

    V = builtin("sec4-V")
    sol = build_eps_approx(V, builtin("sec4-L"), (START[0], START[1], float(sec4_V(*START))), 0.1)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(sol.times, sol.nodes[:, 2], label="u")
    ax.plot(sol.times, sec4_V(sol.nodes[:, 0], sol.nodes[:, 1]), "--", label="V(s, x)")
    ax.set(xlabel="t", title="epsilon-approximate solution, eps = 0.1")
    ax.legend()
    out["viability.png"] = _png(fig)
    plt.close(fig)

    H = builtin("sec3")
    xg = np.linspace(-1, 1, 201)
    fig, ax = plt.subplots(figsize=(5, 4))
    for q in (0.5, 1.0, 2.0):
        ax.plot(xg, [barron_jensen_hbar(H, 0.5, x, 0.0, 1.0, q) for x in xg], ".", ms=2, label=f"q = {q}")
    ax.set(xlabel="x", title="Barron-Jensen Hbar at p = 1")
    ax.legend()
    out["barron_jensen.png"] = _png(fig)
    plt.close(fig)

    for name, data in out.items():
        (Path(root) / name).write_bytes(data)
    return out
