"""Command line interface.

Every subcommand writes its outputs plus a ``config.json`` echoing the
effective configuration and run diagnostics into the output directory.
Floating point values are written with 17 significant digits, so reruns with
identical arguments reproduce output files byte for byte. On error the exit
code is nonzero and partially written outputs are removed.

The ``GEOMPPCA_THREADS`` environment variable caps the number of worker
processes used for independent Monte Carlo units; the current implementation
executes them sequentially (one worker), which satisfies any cap, and all
results are schedule-independent by the seeding contract.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import baselines, bridge, estimators, geometry, stochastic
from .seeding import derived_seed


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


def _threads_cap() -> int:
    raw = os.environ.get("GEOMPPCA_THREADS", "")
    if not raw:
        return 1
    cap = int(raw)
    if cap < 1:
        raise ValueError("GEOMPPCA_THREADS must be a positive integer")
    return cap


def _build_chart(args) -> geometry.ManifoldChart:
    if args.manifold == "ellipsoid":
        axes = _parse_floats(args.axes) if args.axes else [1.0, 1.0, 1.0]
        return geometry.by_name("ellipsoid", axes)
    return geometry.by_name(args.manifold)


def _frame_matrix(chart, m, variances, angle, T, k=None):
    """Build W columns from axis variances and an in-plane orientation angle.

    A variance v along an axis corresponds to a column of g-norm sqrt(v / T);
    the angle rotates the leading directions inside the plane of the first
    two g-orthonormalized coordinate directions.
    """
    from .frame_bundle import g_orthonormal_basis

    d = chart.dim
    B = g_orthonormal_basis(chart, np.asarray(m, dtype=float))
    k = len(variances) if k is None else k
    if len(variances) < k:
        raise ValueError(f"need {k} variances, got {len(variances)}")
    rot = np.eye(d)
    if d >= 2 and angle:
        c, s = np.cos(angle), np.sin(angle)
        rot[0, 0], rot[0, 1], rot[1, 0], rot[1, 1] = c, -s, s, c
    dirs = (B @ rot)[:, :k]
    scales = np.sqrt(np.asarray(variances[:k], dtype=float) / T)
    return dirs * scales


def _model_from_args(args, chart) -> stochastic.ModelParams:
    d = chart.dim
    m = np.asarray(_parse_floats(args.m), dtype=float) if args.m else np.zeros(d)
    T = args.T
    if args.W:
        cols = [np.asarray(_parse_floats(col), dtype=float) for col in args.W.split(";")]
        W = np.stack(cols, axis=1)
    elif args.lam:
        W = _frame_matrix(chart, m, _parse_floats(args.lam), args.angle, T)
    else:
        raise ValueError("specify principal axes with --lambda or --W")
    return stochastic.ModelParams(m=m, W=W, sigma=args.sigma, chart=chart, T=T)


class _OutputSet:
    """Tracks files written by one run so failures can clean up after themselves."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.written: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.out_dir, name)
        self.written.append(p)
        return p

    def discard(self):
        for p in self.written:
            if os.path.exists(p):
                os.remove(p)


def _write_csv(path: str, header: list[str], rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (int, float, np.floating)) else v for v in row])


def _write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _embed_cols(chart, x):
    if chart.embed is not None:
        return [float(v) for v in chart.embed(x)]
    return [float("nan")] * 3

def _config_echo(args, extra=None) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",) and v is not None}
    cfg["threads_cap"] = _threads_cap()
    if extra:
        cfg.update(extra)
    return cfg


def _write_config(out: _OutputSet, args, diagnostics: dict):
    _write_json(
        out.path("config.json"),
        {"config": _config_echo(args), "diagnostics": diagnostics},
    )


def _read_data_csv(path: str, d: int) -> np.ndarray:
    with open(path) as fh:
        reader = csv.DictReader(fh)
        cols = [f"x{i + 1}" for i in range(d)]
        missing = [c for c in cols if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"data file {path} lacks columns {missing}")
        rows = [[float(row[c]) for c in cols] for row in reader]
    if not rows:
        raise ValueError(f"data file {path} has no rows")
    return np.asarray(rows)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_sample(args, out: _OutputSet):
    chart = _build_chart(args)
    params = _model_from_args(args, chart)
    result = stochastic.forward_samples(params, args.N, n=args.n, seed=args.seed)
    d = chart.dim
    xcols = [f"x{i + 1}" for i in range(d)]

    rows = []
    for sid, traj in enumerate(result.trajectories):
        for step, t in enumerate(traj.times):
            x = traj.base[step]
            rows.append([sid, step, t, *x, *_embed_cols(chart, x)])
    _write_csv(
        out.path("trajectories.csv"),
        ["sample_id", "step", "t", *xcols, "emb_x", "emb_y", "emb_z"],
        rows,
    )
    _write_csv(
        out.path("endpoints.csv"),
        ["sample_id", *xcols, "emb_x", "emb_y", "emb_z"],
        [
            [sid, *x, *_embed_cols(chart, x)]
            for sid, x in enumerate(result.endpoints)
        ],
    )
    _write_config(out, args, {"rejections": result.rejections, "workers_used": 1})


def _cmd_density(args, out: _OutputSet):
    chart = _build_chart(args)
    params = _model_from_args(args, chart)
    d = chart.dim
    lo, hi, num = args.grid.split(":")
    axis = np.linspace(float(lo), float(hi), int(num))
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    grid = np.stack([m.reshape(-1) for m in mesh], axis=1)
    estimates = bridge.density_grid(
        params, grid, n=args.n, n_samples=args.n_bridges, seed=args.seed
    )
    xcols = [f"x{i + 1}" for i in range(d)]
    rows = []
    for v, est in zip(grid, estimates):
        rows.append(
            [*v, *_embed_cols(chart, v), est.value, est.chart_density, est.stderr, est.n_samples]
        )
    _write_csv(
        out.path("density.csv"),
        [*xcols, "emb_x", "emb_y", "emb_z", "density_volg", "density_chart", "stderr", "n_bridges"],
        rows,
    )
    failures = [i for i, e in enumerate(estimates) if e.error]
    _write_config(
        out,
        args,
        {
            "rejections": int(sum(e.n_rejected for e in estimates)),
            "failed_points": failures,
            "workers_used": 1,
        },
    )


def _cmd_bridge(args, out: _OutputSet):
    chart = _build_chart(args)
    params = _model_from_args(args, chart)
    v = np.asarray(_parse_floats(args.target), dtype=float)
    d, k = params.d, params.k
    samples = [
        bridge.guided_bridge(params, v, n=args.n, seed=derived_seed(args.seed, b))
        for b in range(args.n_bridges)
    ]
    xcols = [f"x{i + 1}" for i in range(d)]
    rows = []
    for bid, s in enumerate(samples):
        for step, t in enumerate(s.trajectory.times):
            x = s.trajectory.base[step]
            rows.append([bid, step, t, *x, *_embed_cols(chart, x)])
    _write_csv(
        out.path("bridges.csv"),
        ["bridge_id", "step", "t", *xcols, "emb_x", "emb_y", "emb_z"],
        rows,
    )
    xhat_cols = [f"xhat{i + 1}" for i in range(k)]
    lat_rows = []
    for bid, s in enumerate(samples):
        for step, t in enumerate(s.trajectory.times):
            lat_rows.append([bid, step, t, *s.trajectory.latent[step], s.log_weight])
    # importance-weighted mean latent path appended with bridge_id -1
    lw = np.array([s.log_weight for s in samples])
    w = np.exp(lw - lw.max())
    w = w / w.sum()
    mean_path = np.einsum(
        "b,btk->tk", w, np.stack([s.trajectory.latent for s in samples])
    )
    times = samples[0].trajectory.times
    for step, t in enumerate(times):
        lat_rows.append([-1, step, t, *mean_path[step], 0.0])
    _write_csv(
        out.path("latent.csv"),
        ["bridge_id", "step", "t", *xhat_cols, "log_weight"],
        lat_rows,
    )
    hits = np.array([s.hit_error for s in samples])
    ess = float(1.0 / np.sum(w * w))
    _write_config(
        out,
        args,
        {
            "median_hit_error": float(np.median(hits)),
            "ess": ess,
            "workers_used": 1,
        },
    )


def _cmd_fit(args, out: _OutputSet):
    chart = _build_chart(args)
    d = chart.dim
    synthesized = False
    if args.data:
        data = _read_data_csv(args.data, d)
    else:
        if args.true_lambda is None or args.true_sigma is None:
            raise ValueError("fit needs --data or --true-lambda/--true-sigma")
        m = np.asarray(_parse_floats(args.m), dtype=float) if args.m else np.zeros(d)
        W = _frame_matrix(chart, m, _parse_floats(args.true_lambda), args.angle, args.T)
        true_params = stochastic.ModelParams(
            m=m, W=W, sigma=args.true_sigma, chart=chart, T=args.T
        )
        data = stochastic.forward_samples(
            true_params, args.N, n=args.n, seed=derived_seed(args.seed, 987)
        ).endpoints
        synthesized = True

    init = estimators.initial_params(chart, data, args.k)
    opts = estimators.FitOptions(
        n=args.n,
        n_samples=args.n_bridges,
        max_iter=args.max_iter,
        step_size=args.step_size,
        seed=args.seed,
    )
    fit = estimators.fit_mle(data, chart, args.k, init, opts)

    lam_cols = [f"lambda{i + 1}" for i in range(args.k)]
    _write_csv(
        out.path("trace.csv"),
        ["iter", "neg_log_lik", "stderr", *lam_cols, "sigma"],
        [
            [r.iteration, r.neg_log_lik, r.stderr, *r.lambdas, r.sigma]
            for r in fit.trace
        ],
    )
    U, lambdas = fit.eigen
    _write_json(
        out.path("fit.json"),
        {
            "config": _config_echo(args, {"synthesized_data": synthesized}),
            "m": [float(v) for v in fit.params.m],
            "W": [[float(v) for v in row] for row in fit.params.W],
            "sigma": float(fit.params.sigma),
            "T": float(fit.params.T),
            "lambdas": [float(v) for v in lambdas],
            "principal_directions": [[float(v) for v in row] for row in U],
            "iterations": fit.iterations,
            "converged": fit.converged,
            "neg_log_lik": float(min(r.neg_log_lik for r in fit.trace)),
        },
    )
    _write_config(out, args, {"iterations": fit.iterations, "workers_used": 1})


def _cmd_components(args, out: _OutputSet):
    chart = _build_chart(args)
    params = _model_from_args(args, chart)
    data = _read_data_csv(args.data, chart.dim)
    k = params.k
    rows = []
    ess_list = []
    for i, y in enumerate(data):
        summary = estimators.principal_paths(
            params, y, n=args.n, n_samples=args.n_bridges, seed=derived_seed(args.seed, i)
        )
        ess_list.append(summary.ess)
        spread = summary.endpoint_spread.reshape(-1)
        rows.append([i, *y, *summary.endpoint, *spread, summary.ess])
    xcols = [f"x{i + 1}" for i in range(chart.dim)]
    xhat_cols = [f"xhat{i + 1}" for i in range(k)]
    spread_cols = [f"spread_{a + 1}{b + 1}" for a in range(k) for b in range(k)]
    _write_csv(
        out.path("components.csv"),
        ["datum_id", *xcols, *xhat_cols, *spread_cols, "ess"],
        rows,
    )
    _write_config(out, args, {"ess": ess_list, "workers_used": 1})


def _cmd_mpp(args, out: _OutputSet):
    chart = _build_chart(args)
    d = chart.dim
    m = np.asarray(_parse_floats(args.m), dtype=float) if args.m else np.zeros(d)
    if args.W:
        cols = [np.asarray(_parse_floats(col), dtype=float) for col in args.W.split(";")]
        nu = np.stack(cols, axis=1)
    elif args.lam:
        nu = _frame_matrix(chart, m, _parse_floats(args.lam), args.angle, args.T, k=d)
    else:
        raise ValueError("specify the frame with --lambda (d values) or --W")
    from .frame_bundle import FramePoint

    u = FramePoint(m, nu, chart)
    y = np.asarray(_parse_floats(args.target), dtype=float)
    result = estimators.mpp_shoot(u, y, estimators.MppOptions(n_steps=args.n_steps))
    xcols = [f"x{i + 1}" for i in range(d)]
    times = np.linspace(0.0, 1.0, len(result.path))
    rows = []
    for step, t in enumerate(times):
        x = result.path[step]
        rows.append(
            [step, t, *x, *_embed_cols(chart, x), result.sq_distance, result.endpoint_residual]
        )
    _write_csv(
        out.path("mpp.csv"),
        ["step", "t", *xcols, "emb_x", "emb_y", "emb_z", "sq_distance", "endpoint_residual"],
        rows,
    )
    _write_config(
        out,
        args,
        {
            "sq_distance": result.sq_distance,
            "endpoint_residual": result.endpoint_residual,
            "workers_used": 1,
        },
    )


def _cmd_baseline(args, out: _OutputSet):
    payload: dict = {"method": args.method}
    if args.method == "ppca":
        data = _read_data_csv(args.data, args.dim)
        fit = baselines.ppca_fit(data, args.k)
        payload.update(
            {
                "m": [float(v) for v in fit.m],
                "W_ml": [[float(v) for v in row] for row in fit.W_ml],
                "sigma2_ml": float(fit.sigma2_ml),
                "eigvals": [float(v) for v in fit.eigvals],
            }
        )
    elif args.method == "tpca":
        chart = _build_chart(args)
        data = _read_data_csv(args.data, chart.dim)
        base = args.base if args.base == "frechet" else np.asarray(_parse_floats(args.base))
        res = baselines.tangent_pca(chart, data, base, k=args.k)
        payload.update(
            {
                "base": [float(v) for v in res.base],
                "eigvals": [float(v) for v in res.fit.eigvals],
                "sigma2_ml": float(res.fit.sigma2_ml),
                "W_ml": [[float(v) for v in row] for row in res.fit.W_ml],
            }
        )
    else:
        raise ValueError(f"unknown baseline method {args.method!r}")
    _write_json(out.path("baseline.json"), payload)
    _write_config(out, args, {"workers_used": 1})


# ---------------------------------------------------------------------------


def _add_model_flags(p, lam_help="axis variances v1[,v2]; column g-norm is sqrt(v/T)"):
    p.add_argument("--manifold", required=True, help="sphere | ellipsoid | flat2 | flat3 ...")
    p.add_argument("--axes", help="ellipsoid semi-axes a,b,c")
    p.add_argument("--m", help="base point in chart coordinates, comma separated")
    p.add_argument("--lambda", dest="lam", help=lam_help)
    p.add_argument("--angle", type=float, default=0.0, help="orientation of the leading axis, radians")
    p.add_argument("--W", help="explicit frame columns, ';' between columns, ',' within")
    p.add_argument("--sigma", type=float, default=0.0, help="isotropic noise level")
    p.add_argument("--T", type=float, default=1.0, help="time horizon")
    p.add_argument("--n", type=int, default=stochastic.DEFAULT_STEPS, help="integration steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="geomppca",
        description="Probabilistic PCA for manifold-valued data via stochastic development",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="forward samples: trajectories.csv, endpoints.csv")
    _add_model_flags(p)
    p.add_argument("--N", type=int, default=64, help="number of samples")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("density", help="transition density on a grid: density.csv")
    _add_model_flags(p)
    p.add_argument("--grid", required=True, help="lo:hi:num applied to every axis")
    p.add_argument("--n-bridges", type=int, default=2000)
    p.set_defaults(func=_cmd_density)

    p = sub.add_parser("bridge", help="guided bridges to a target: bridges.csv, latent.csv")
    _add_model_flags(p)
    p.add_argument("--target", required=True, help="target chart point, comma separated")
    p.add_argument("--n-bridges", type=int, default=32)
    p.set_defaults(func=_cmd_bridge)

    p = sub.add_parser("fit", help="maximum likelihood fit: trace.csv, fit.json")
    _add_model_flags(p)
    p.add_argument("--k", type=int, default=1, help="latent rank")
    p.add_argument("--data", help="CSV with columns x1..xd; omit to synthesize")
    p.add_argument("--true-lambda", help="axis variances used to synthesize data")
    p.add_argument("--true-sigma", type=float, help="noise level used to synthesize data")
    p.add_argument("--N", type=int, default=64, help="synthesized sample count")
    p.add_argument("--n-bridges", type=int, default=2000)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--step-size", type=float, default=0.1)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("components", help="latent summaries per datum: components.csv")
    _add_model_flags(p)
    p.add_argument("--data", required=True, help="CSV with columns x1..xd")
    p.add_argument("--n-bridges", type=int, default=2000)
    p.set_defaults(func=_cmd_components)

    p = sub.add_parser("mpp", help="most probable path to a target: mpp.csv")
    _add_model_flags(p)
    p.add_argument("--target", required=True)
    p.add_argument("--n-steps", type=int, default=500)
    p.set_defaults(func=_cmd_mpp)

    p = sub.add_parser("baseline", help="Euclidean or tangent PCA: baseline.json")
    p.add_argument("--method", required=True, choices=["ppca", "tpca"])
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--dim", type=int, default=2, help="data dimension for ppca")
    p.add_argument("--manifold", help="chart for tpca")
    p.add_argument("--axes")
    p.add_argument("--base", default="frechet", help="'frechet' or chart point")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = _OutputSet(args.out)
    try:
        args.func(args, out)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        out.discard()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
