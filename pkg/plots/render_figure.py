#!/usr/bin/env python3
"""Render figures from the simulation CLI's CSV/JSON artifacts.

This script is deliberately decoupled from the simulation library: it reads
only the documented CSV/JSON files (config.json, trajectories.csv,
endpoints.csv, bridges.csv, density.csv, latent.csv, trace.csv, fit.json,
baseline.json) and rebuilds any surface geometry from the manifold name and
parameters echoed in config.json.  Output is always a 150-dpi PNG with
pinned metadata, so rerunning on the same inputs reproduces the file byte
for byte.

Usage:
    python3 render_figure.py --kind surface-trajectories \
        --input RUN_DIR --output figure.png [--elev 30] [--azim -60]

``--input`` may be given multiple times; each entry is a run directory or a
single artifact file.  The kind decides which artifacts are looked up.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = (
    "surface-trajectories",
    "surface-density",
    "latent-paths",
    "latent-density",
    "trace",
    "linearization-compare",
)

SAVE_KW = {"dpi": 150, "metadata": {"Software": "render_figure"}}
MESH_LAT, MESH_LON = 48, 96


class SchemaError(ValueError):
    """An input file exists but does not match the documented schema."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: what to draw, from which files, to which path."""

    kind: str
    inputs: tuple[Path, ...]
    output: Path
    elevation: float = 30.0
    azimuth: float = -60.0


# ---------------------------------------------------------------------------
# input plumbing


def _find(spec: FigureSpec, filename: str, required: bool = True) -> Path | None:
    """Locate an artifact among the spec inputs (directories or files)."""
    for entry in spec.inputs:
        if entry.is_dir() and (entry / filename).is_file():
            return entry / filename
        if entry.is_file() and entry.name == filename:
            return entry
    if required:
        searched = ", ".join(str(p) for p in spec.inputs)
        raise FileNotFoundError(f"no {filename} among inputs ({searched})")
    return None


def _read_table(path: Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        reader = csv.DictReader(fh)
        names = list(reader.fieldnames or [])
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: empty input (no data rows)")
    return {n: np.array([r[n] for r in rows], dtype=float) for n in names}


def _require(table: dict[str, np.ndarray], path: Path, *cols: str) -> None:
    for c in cols:
        if c not in table:
            raise SchemaError(f"{path}: missing column '{c}'")


def _read_json(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _prefixed(table: dict[str, np.ndarray], prefix: str) -> np.ndarray:
    """Stack columns prefix1, prefix2, ... in index order; (rows, count)."""
    idx = 1
    cols = []
    while f"{prefix}{idx}" in table:
        cols.append(table[f"{prefix}{idx}"])
        idx += 1
    if not cols:
        raise SchemaError(f"missing column '{prefix}1'")
    return np.stack(cols, axis=1)


def _chart_config(spec: FigureSpec) -> dict:
    path = _find(spec, "config.json")
    cfg = _read_json(path).get("config", {})
    if "manifold" not in cfg:
        raise SchemaError(f"{path}: missing 'manifold' in config echo")
    return cfg


def _is_flat(cfg: dict) -> bool:
    return str(cfg.get("manifold", "")).startswith("flat")


# ---------------------------------------------------------------------------
# surface geometry, rebuilt from the config echo


def _surface_mesh(cfg: dict):
    """Embedded surface mesh (X, Y, Z arrays) for the named manifold."""
    name = str(cfg["manifold"])
    theta = np.linspace(0.0, np.pi, MESH_LAT)
    phi = np.linspace(0.0, 2.0 * np.pi, MESH_LON)
    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    U = np.stack(
        [np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], axis=-1
    )
    if name == "sphere":
        axes = np.ones(3)
    elif name == "ellipsoid":
        axes = np.array([float(v) for v in str(cfg.get("axes", "1,1,1")).split(",")])
        if axes.size != 3:
            raise SchemaError("config echo 'axes' must list three semi-axes")
    else:
        raise SchemaError(f"no surface mesh for manifold '{name}'")
    E = U * axes
    return E[..., 0], E[..., 1], E[..., 2], U


def _mesh_chart_coords(U: np.ndarray) -> np.ndarray:
    """Chart coordinates of unit-sphere mesh vertices (projection from the
    antipode of the chart center), matching the simulator's convention."""
    denom = 1.0 + U[..., 2]
    safe = np.where(np.abs(denom) < 1e-9, np.nan, denom)
    return np.stack([U[..., 0] / safe, U[..., 1] / safe], axis=-1)


def _nearest_values(grid_xy: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Nearest-neighbour lookup of grid values at query chart points."""
    flat = query.reshape(-1, 2)
    out = np.zeros(flat.shape[0])
    okq = np.isfinite(flat).all(axis=1)
    d2 = np.sum((flat[okq, None, :] - grid_xy[None, :, :]) ** 2, axis=-1)
    out[okq] = values[np.argmin(d2, axis=1)]
    # far outside the sampled grid the density is treated as zero
    span = np.max(np.linalg.norm(grid_xy, axis=1)) + np.max(
        np.diff(np.unique(grid_xy[:, 0]))
    ) if grid_xy.shape[0] > 1 else np.inf
    far = np.linalg.norm(np.nan_to_num(flat, nan=np.inf), axis=1) > 1.5 * span
    out[far] = 0.0
    return out.reshape(query.shape[:-1])


def _setup_3d(fig, spec: FigureSpec):
    ax = fig.add_subplot(111, projection="3d")
    ax.view_init(elev=spec.elevation, azim=spec.azimuth)
    ax.set_box_aspect((1, 1, 1))
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    return ax


# ---------------------------------------------------------------------------
# figure kinds


def _render_surface_trajectories(spec: FigureSpec) -> None:
    cfg = _chart_config(spec)
    path = _find(spec, "trajectories.csv", required=False) or _find(spec, "bridges.csv")
    table = _read_table(path)
    idcol = "sample_id" if "sample_id" in table else "bridge_id"
    _require(table, path, idcol, "step", "t", "x1")
    ids = table[idcol].astype(int)
    uniq = np.unique(ids)
    cmap = plt.get_cmap("viridis")

    if _is_flat(cfg):
        xy = _prefixed(table, "x")
        fig, ax = plt.subplots(figsize=(6.0, 6.0))
        for j, sid in enumerate(uniq):
            sel = ids == sid
            ax.plot(xy[sel, 0], xy[sel, 1], lw=0.7, color=cmap(j / max(len(uniq) - 1, 1)))
            ax.plot(xy[sel][-1, 0], xy[sel][-1, 1], "o", ms=3, color="crimson")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_aspect("equal")
    else:
        _require(table, path, "emb_x", "emb_y", "emb_z")
        X, Y, Z, _ = _surface_mesh(cfg)
        fig = plt.figure(figsize=(7.0, 6.5))
        ax = _setup_3d(fig, spec)
        ax.plot_surface(X, Y, Z, color="lightsteelblue", alpha=0.25, linewidth=0, shade=True)
        emb = np.stack([table["emb_x"], table["emb_y"], table["emb_z"]], axis=1)
        for j, sid in enumerate(uniq):
            sel = ids == sid
            ax.plot(*emb[sel].T, lw=0.7, color=cmap(j / max(len(uniq) - 1, 1)))
            ax.scatter(*emb[sel][-1], s=12, color="crimson", depthshade=False)
        ep = _find(spec, "endpoints.csv", required=False)
        if ep is not None:
            et = _read_table(ep)
            _require(et, ep, "emb_x", "emb_y", "emb_z")
            ax.scatter(et["emb_x"], et["emb_y"], et["emb_z"], s=8, color="k", depthshade=False)
    ax.set_title(f"paths on {cfg['manifold']}")
    fig.savefig(spec.output, **SAVE_KW)
    plt.close(fig)


def _render_surface_density(spec: FigureSpec) -> None:
    cfg = _chart_config(spec)
    path = _find(spec, "density.csv")
    table = _read_table(path)
    _require(table, path, "x1", "density_volg")
    pts = _prefixed(table, "x")
    dens = table["density_volg"]

    if _is_flat(cfg):
        fig, ax = plt.subplots(figsize=(6.4, 5.4))
        sc = ax.scatter(pts[:, 0], pts[:, 1], c=dens, cmap="inferno", s=160, marker="s")
        fig.colorbar(sc, ax=ax, label="density")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_aspect("equal")
    else:
        X, Y, Z, U = _surface_mesh(cfg)
        vertex_vals = _nearest_values(pts, dens, _mesh_chart_coords(U))
        vmax = float(vertex_vals.max()) or 1.0
        colors = plt.get_cmap("inferno")(vertex_vals / vmax)
        fig = plt.figure(figsize=(7.0, 6.5))
        ax = _setup_3d(fig, spec)
        ax.plot_surface(X, Y, Z, facecolors=colors, linewidth=0, antialiased=False, shade=False)
        mappable = plt.cm.ScalarMappable(cmap="inferno")
        mappable.set_array(vertex_vals)
        fig.colorbar(mappable, ax=ax, shrink=0.7, label="density")
    ax.set_title(f"transition density on {cfg['manifold']}")
    fig.savefig(spec.output, **SAVE_KW)
    plt.close(fig)


def _render_latent_paths(spec: FigureSpec) -> None:
    path = _find(spec, "latent.csv")
    table = _read_table(path)
    _require(table, path, "bridge_id", "step", "t", "xhat1")
    ids = table["bridge_id"].astype(int)
    lat = _prefixed(table, "xhat")
    k = lat.shape[1]
    fig, ax = plt.subplots(figsize=(6.6, 5.2))
    if k >= 2:
        for sid in np.unique(ids[ids >= 0]):
            sel = ids == sid
            ax.plot(lat[sel, 0], lat[sel, 1], lw=0.5, color="0.75")
        mean = ids == -1
        if mean.any():
            ax.plot(lat[mean, 0], lat[mean, 1], lw=2.0, color="crimson", label="weighted mean")
            ax.legend(loc="best")
        ax.set_xlabel("latent 1")
        ax.set_ylabel("latent 2")
    else:
        t = table["t"]
        for sid in np.unique(ids[ids >= 0]):
            sel = ids == sid
            ax.plot(t[sel], lat[sel, 0], lw=0.5, color="0.75")
        mean = ids == -1
        if mean.any():
            ax.plot(t[mean], lat[mean, 0], lw=2.0, color="crimson", label="weighted mean")
            ax.legend(loc="best")
        ax.set_xlabel("t")
        ax.set_ylabel("latent 1")
    ax.set_title("latent bridge paths")
    fig.savefig(spec.output, **SAVE_KW)
    plt.close(fig)


def _render_latent_density(spec: FigureSpec) -> None:
    path = _find(spec, "latent.csv")
    table = _read_table(path)
    _require(table, path, "bridge_id", "step", "xhat1", "log_weight")
    ids = table["bridge_id"].astype(int)
    steps = table["step"].astype(int)
    lat = _prefixed(table, "xhat")
    last = steps == steps.max()
    sel = last & (ids >= 0)
    if not sel.any():
        raise SchemaError(f"{path}: no bridge endpoint rows")
    lw = table["log_weight"][sel]
    w = np.exp(lw - lw.max())
    w = w / w.sum()
    ends = lat[sel]
    fig, ax = plt.subplots(figsize=(6.4, 5.2))
    if ends.shape[1] >= 2:
        h = ax.hist2d(ends[:, 0], ends[:, 1], bins=32, weights=w, cmap="magma")
        fig.colorbar(h[3], ax=ax, label="weighted frequency")
        ax.set_xlabel("latent 1")
        ax.set_ylabel("latent 2")
    else:
        ax.hist(ends[:, 0], bins=32, weights=w, color="slateblue")
        ax.set_xlabel("latent 1")
        ax.set_ylabel("weighted frequency")
    ax.set_title("latent endpoint distribution")
    fig.savefig(spec.output, **SAVE_KW)
    plt.close(fig)


def _truth_lines(spec: FigureSpec) -> tuple[list[float] | None, float | None]:
    """Ground-truth scales from the fit config echo, when data were synthesized."""
    fit_path = _find(spec, "fit.json", required=False)
    cfg = {}
    if fit_path is not None:
        cfg = _read_json(fit_path).get("config", {})
    else:
        cfg_path = _find(spec, "config.json", required=False)
        if cfg_path is not None:
            cfg = _read_json(cfg_path).get("config", {})
    lams = None
    sigma = None
    if cfg.get("true_lambda"):
        T = float(cfg.get("T", 1.0))
        lams = [float(np.sqrt(float(v) / T)) for v in str(cfg["true_lambda"]).split(",")]
    if cfg.get("true_sigma") is not None:
        sigma = float(cfg["true_sigma"])
    return lams, sigma


def _render_trace(spec: FigureSpec) -> None:
    path = _find(spec, "trace.csv")
    table = _read_table(path)
    _require(table, path, "iter", "neg_log_lik", "stderr", "lambda1", "sigma")
    it = table["iter"]
    nll = table["neg_log_lik"]
    se = table["stderr"]
    lams = _prefixed(table, "lambda")
    true_lams, true_sigma = _truth_lines(spec)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 4.2))
    ax1.plot(it, nll, color="k", lw=1.4)
    ax1.fill_between(it, nll - se, nll + se, color="0.8")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("negative log-likelihood")

    for j in range(lams.shape[1]):
        ax2.plot(it, lams[:, j], lw=1.4, label=f"scale {j + 1}")
    ax2.plot(it, table["sigma"], lw=1.4, ls="--", label="noise")
    if true_lams is not None:
        for v in true_lams[: lams.shape[1]]:
            ax2.axhline(v, color="red", lw=1.0)
            ax2.axhspan(0.7 * v, 1.3 * v, color="red", alpha=0.08)
    if true_sigma is not None:
        ax2.axhline(true_sigma, color="red", lw=1.0, ls="--")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("parameter value")
    ax2.legend(loc="best", fontsize=8)
    fig.suptitle("fit trace")
    fig.tight_layout()
    fig.savefig(spec.output, **SAVE_KW)
    plt.close(fig)


def _render_linearization_compare(spec: FigureSpec) -> None:
    base_path = _find(spec, "baseline.json")
    fit_path = _find(spec, "fit.json")
    base = _read_json(base_path)
    fit = _read_json(fit_path)
    for key in ("eigvals",):
        if key not in base:
            raise SchemaError(f"{base_path}: missing key '{key}'")
    for key in ("lambdas", "sigma", "T"):
        if key not in fit:
            raise SchemaError(f"{fit_path}: missing key '{key}'")
    eig = np.asarray(base["eigvals"], dtype=float)
    T = float(fit["T"])
    lam_var = np.array([v * v * T for v in fit["lambdas"]], dtype=float)
    sig_var = float(fit["sigma"]) ** 2 * T
    model = np.concatenate([lam_var, np.full(eig.size - lam_var.size, sig_var)])

    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    pos = np.arange(eig.size)
    ax.bar(pos - 0.18, eig, width=0.36, color="steelblue", label="linearized estimate")
    ax.bar(pos + 0.18, model[: eig.size], width=0.36, color="darkorange", label="diffusion fit")
    ax.set_xticks(pos)
    ax.set_xticklabels(
        [f"axis {i + 1}" if i < lam_var.size else f"axis {i + 1} (noise)" for i in pos]
    )
    ax.set_ylabel("estimated variance")
    ax.legend(loc="best")
    ax.set_title("linearized analysis vs diffusion model")
    fig.tight_layout()
    fig.savefig(spec.output, **SAVE_KW)
    plt.close(fig)


_RENDERERS = {
    "surface-trajectories": _render_surface_trajectories,
    "surface-density": _render_surface_density,
    "latent-paths": _render_latent_paths,
    "latent-density": _render_latent_density,
    "trace": _render_trace,
    "linearization-compare": _render_linearization_compare,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    if spec.kind not in _RENDERERS:
        raise ValueError(f"unknown figure kind '{spec.kind}'")
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    _RENDERERS[spec.kind](spec)
    return spec.output


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="render_figure", description="render figures from simulation artifacts"
    )
    ap.add_argument("--kind", required=True, choices=KINDS)
    ap.add_argument(
        "--input",
        dest="inputs",
        action="append",
        required=True,
        help="run directory or artifact file; repeatable",
    )
    ap.add_argument("--output", required=True, help="output PNG path")
    ap.add_argument("--elev", type=float, default=30.0, help="3d view elevation")
    ap.add_argument("--azim", type=float, default=-60.0, help="3d view azimuth")
    args = ap.parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        inputs=tuple(Path(p) for p in args.inputs),
        output=Path(args.output),
        elevation=args.elev,
        azimuth=args.azim,
    )
    try:
        render(spec)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
