"""Estimators for the curved model: Monte Carlo maximum likelihood, latent
path summaries, and most-probable-path (MPP) machinery.

The MLE ascends a bridge-sampled log-likelihood with finite-difference
gradients under common random numbers: within one iteration every objective
evaluation reuses the same frozen bridge noise, so the gradient differences
are deterministic. MPPs are normal sub-Riemannian geodesics of the frame
bundle metric induced by the frame, found by shooting.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .baselines import frechet_mean, tangent_pca
from .bridge import log_likelihood
from .frame_bundle import FramePoint, frame_volume, g_orthonormal_basis
from .geometry import ManifoldChart, _check_point
from .seeding import derived_seed
from .stochastic import DEFAULT_STEPS, ModelParams


# ---------------------------------------------------------------------------
# maximum likelihood fitting


@dataclass(frozen=True)
class FitOptions:
    n: int = DEFAULT_STEPS
    n_samples: int = 2000
    step_size: float = 0.1
    max_iter: int = 50
    seed: int = 0
    fd_step: float = 1e-3
    lambda_floor: float = 1e-4


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    neg_log_lik: float
    stderr: float
    lambdas: np.ndarray
    sigma: float


@dataclass(frozen=True)
class PCAFit:
    """Result of the Monte Carlo maximum likelihood fit."""

    params: ModelParams
    trace: list
    iterations: int
    converged: bool

    @property
    def eigen(self):
        """(U, lambdas): g-orthonormal principal directions and their scales."""
        return _eigen_factors(self.params)


def _eigen_factors(params: ModelParams):
    """Factor W = U diag(lambda) with U g-orthonormal at m, lambdas descending."""
    G = params.chart.metric(params.m)
    A = params.W.T @ G @ params.W
    evals, evecs = np.linalg.eigh(A)
    idx = np.argsort(evals)[::-1]
    evals = np.clip(evals[idx], 0.0, None)
    evecs = evecs[:, idx]
    lambdas = np.sqrt(evals)
    U = params.W @ evecs / np.where(lambdas > 0, lambdas, 1.0)
    return U, lambdas


def _pack_theta(params: ModelParams):
    return np.concatenate([params.m, params.W.reshape(-1), [np.log(params.sigma)]])


def _unpack_theta(theta, chart, d, k, T):
    m = theta[:d]
    W = theta[d : d + d * k].reshape(d, k)
    sigma = float(np.exp(theta[-1]))
    return ModelParams(m=m, W=W, sigma=sigma, chart=chart, T=T)


def _clamp_lambdas(params: ModelParams, floor: float) -> ModelParams:
    U, lambdas = _eigen_factors(params)
    if np.all(lambdas >= floor):
        return params
    W = U @ np.diag(np.maximum(lambdas, floor))
    return replace(params, W=W)


def fit_mle(data, chart: ManifoldChart, k: int, init: ModelParams, opts: FitOptions = FitOptions()) -> PCAFit:
    """Maximum likelihood fit of (m, W, sigma) by bridge-sampled gradient ascent.

    Gradients are central finite differences of the Monte Carlo
    log-likelihood with bridge seeds frozen per iteration (common random
    numbers); sigma is optimized on the log scale and the W scales are kept
    above ``opts.lambda_floor``. Returns the best parameters seen, with a
    per-iteration trace.
    """
    data = np.asarray(data, dtype=float)
    _check_point(chart, data)
    if init.chart is not chart and init.chart.name != chart.name:
        raise ValueError("init parameters use a different chart")
    if init.k != k:
        raise ValueError(f"init has k={init.k}, requested k={k}")
    if init.sigma <= 0:
        raise ValueError("fit_mle requires sigma > 0 (log parametrization)")
    d = chart.dim
    T = init.T
    theta = _pack_theta(init)

    def objective(th, it_seed):
        p = _unpack_theta(th, chart, d, k, T)
        return log_likelihood(p, data, n=opts.n, n_samples=opts.n_samples, seed=it_seed)

    def fd_scales(th):
        return opts.fd_step * np.maximum(np.abs(th), 0.1)

    trace: list[TraceRecord] = []
    best_nll = np.inf
    best_theta = theta.copy()
    converged = False
    iterations = 0

    for it in range(opts.max_iter):
        it_seed = derived_seed(opts.seed, it)
        ll0, se0 = objective(theta, it_seed)
        if not np.isfinite(ll0):
            if it == 0:
                raise ValueError("log-likelihood not finite at the initial parameters")
            break
        p_now = _unpack_theta(theta, chart, d, k, T)
        _, lambdas = _eigen_factors(p_now)
        trace.append(TraceRecord(it, -ll0, se0, lambdas, p_now.sigma))
        if -ll0 < best_nll:
            best_nll = -ll0
            best_theta = theta.copy()
        iterations = it + 1

        # central finite differences under the frozen seed
        h = fd_scales(theta)
        grad = np.empty_like(theta)
        for i in range(len(theta)):
            e = np.zeros_like(theta)
            e[i] = h[i]
            lp, _ = objective(theta + e, it_seed)
            lm, _ = objective(theta - e, it_seed)
            grad[i] = (lp - lm) / (2 * h[i])
        gnorm = np.linalg.norm(grad)
        if gnorm == 0 or not np.isfinite(gnorm):
            converged = True
            break
        direction = grad / gnorm

        alpha = opts.step_size
        accepted = False
        while alpha >= 1e-10:
            cand = theta + alpha * direction
            ll_c, _ = objective(cand, it_seed)
            if np.isfinite(ll_c) and ll_c > ll0:
                theta = _pack_theta(
                    _clamp_lambdas(_unpack_theta(cand, chart, d, k, T), opts.lambda_floor)
                )
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True  # step collapse: no ascent direction at resolution
            break

    # evaluate the terminal iterate so it participates in best-seen selection
    final_seed = derived_seed(opts.seed, opts.max_iter)
    ll_f, se_f = objective(theta, final_seed)
    p_f = _unpack_theta(theta, chart, d, k, T)
    _, lambdas_f = _eigen_factors(p_f)
    trace.append(TraceRecord(iterations, -ll_f, se_f, lambdas_f, p_f.sigma))
    if -ll_f < best_nll:
        best_nll = -ll_f
        best_theta = theta.copy()

    return PCAFit(
        params=_unpack_theta(best_theta, chart, d, k, T),
        trace=trace,
        iterations=iterations,
        converged=converged,
    )


def initial_params(chart: ManifoldChart, data, k: int) -> ModelParams:
    """Heuristic starting point from tangent-space PCA.

    The base point is the Frechet mean (sphere) or coordinate mean, principal
    directions and scales come from PPCA of the logarithms, and sigma from
    the discarded-eigenvalue noise floor.
    """
    data = np.asarray(data, dtype=float)
    d = chart.dim
    if chart.is_flat:
        base = data.mean(axis=0)
    elif chart.name == "sphere":
        base = frechet_mean(chart, data)
    else:
        base = data.mean(axis=0)
    t = tangent_pca(chart, data, base, k=k)
    sigma2 = max(t.fit.sigma2_ml, 1e-4)
    lambdas = np.sqrt(np.maximum(t.fit.eigvals[:k] - sigma2, 1e-4))
    B = g_orthonormal_basis(chart, base)
    # principal directions from tangent coordinates back to chart coordinates
    dirs = np.linalg.qr(t.fit.W_ml)[0] if k > 1 else t.fit.W_ml / np.linalg.norm(t.fit.W_ml)
    W = B @ dirs * lambdas
    return ModelParams(m=base, W=W, sigma=float(np.sqrt(sigma2)), chart=chart)


# ---------------------------------------------------------------------------
# latent path summaries


@dataclass(frozen=True)
class LatentSummary:
    """Importance-weighted summary of the latent bridge paths to one datum."""

    mean_path: np.ndarray  # (n+1, k)
    endpoint: np.ndarray  # (k,)
    endpoint_spread: np.ndarray  # (k, k) weighted covariance
    ess: float
    warning: Optional[str] = None


def principal_paths(
    params: ModelParams,
    y,
    n: int = DEFAULT_STEPS,
    n_samples: int = 2000,
    seed: int = 0,
) -> LatentSummary:
    """Self-normalized importance-weighted mean latent path conditioned on y."""
    from .bridge import _seeded_draw, simulate_guided_batch

    y = _check_point(params.chart, np.asarray(y, dtype=float))
    dt = params.T / n
    res = simulate_guided_batch(
        params,
        np.broadcast_to(y, (n_samples, params.d)),
        n,
        _seeded_draw(seed, n_samples, params.k + params.d, dt),
        store_latent=True,
    )
    lw = res.log_weights[res.ok]
    latent = res.latent[res.ok]
    if lw.size == 0:
        raise RuntimeError("all bridges rejected")
    w = np.exp(lw - np.max(lw))
    w = w / np.sum(w)
    ess = float(1.0 / np.sum(w * w))
    mean_path = np.einsum("b,btk->tk", w, latent)
    endpoints = latent[:, -1, :]
    centered = endpoints - mean_path[-1]
    spread = np.einsum("b,ba,bc->ac", w, centered, centered)
    warning = None
    if ess < 10:
        warning = f"effective sample size {ess:.2f} < 10: weight degeneracy"
    return LatentSummary(
        mean_path=mean_path,
        endpoint=mean_path[-1],
        endpoint_spread=spread,
        ess=ess,
        warning=warning,
    )


# ---------------------------------------------------------------------------
# most probable paths: Hamiltonian flow and shooting


@dataclass(frozen=True)
class MppOptions:
    n_steps: int = 500
    max_iter: int = 60
    tol: float = 1e-11
    fd_step: float = 1e-6


@dataclass(frozen=True)
class MppResult:
    initial_momentum: np.ndarray  # packed (p_x, p_nu), length d + d*d
    path: np.ndarray  # (n_steps+1, d) base path
    sq_distance: float
    endpoint_residual: float


def _hamiltonian(chart: ManifoldChart, q, p, d: int):
    """H(q, p) = 1/2 sum_i <p, H_i(q)>^2 on packed frame-bundle coordinates.

    q stacks (x, vec nu), p stacks (p_x, vec p_nu); batched over leading axes.
    """
    x = q[..., :d]
    nu = q[..., d:].reshape(q.shape[:-1] + (d, d))
    px = p[..., :d]
    pnu = p[..., d:].reshape(p.shape[:-1] + (d, d))
    if chart.is_flat:
        c = np.einsum("...a,...ai->...i", px, nu)
        return 0.5 * np.sum(c * c, axis=-1), c
    if chart.christoffel_dir is None:
        Gamma = chart.christoffel(x)
        # c_i = p_x . nu_i + p_nu : (-Gamma nu_i nu)
        c = np.einsum("...a,...ai->...i", px, nu) - np.einsum(
            "...aj,...abc,...bi,...cj->...i", pnu, Gamma, nu, nu
        )
    else:
        # M_i = Gamma contracted along frame column i, stacked on a new axis
        cols = np.moveaxis(nu, -1, 0)
        M = chart.christoffel_dir(x, cols)
        vert = np.einsum("i...ab,...bj,...aj->i...", M, nu, pnu)
        c = np.einsum("...a,...ai->...i", px, nu) - np.moveaxis(vert, 0, -1)
    # diverged shooting trials overflow here and are discarded downstream
    with np.errstate(over="ignore", invalid="ignore"):
        return 0.5 * np.sum(c * c, axis=-1), c


def _dH_dp(chart, q, p, d, c):
    """Analytic momentum gradient: sum_i c_i H_i(q), packed like p.

    Linearity of the Christoffel contraction in its direction collapses the
    sum over fields into a single contraction along dx = nu c.
    """
    x = q[..., :d]
    nu = q[..., d:].reshape(q.shape[:-1] + (d, d))
    dx = np.einsum("...i,...ai->...a", c, nu)
    if chart.is_flat:
        dnu = np.zeros_like(nu)
    elif chart.christoffel_dir is None:
        Gamma = chart.christoffel(x)
        dnu = -np.einsum("...abc,...b,...cj->...aj", Gamma, dx, nu)
    else:
        # diverged trial momenta in shooting produce non-finite rows here;
        # they are discarded by the line search, so suppress the noise
        with np.errstate(invalid="ignore"):
            dnu = -chart.christoffel_dir(x, dx) @ nu
    return np.concatenate([dx, dnu.reshape(q.shape[:-1] + (d * d,))], axis=-1)


def _dH_dq(chart, q, p, d, fd_step):
    """Position gradient of H by central finite differences.

    All 2 n_q perturbed evaluations run as one batched Hamiltonian call on a
    new leading axis.
    """
    n_q = q.shape[-1]
    E = (fd_step * np.eye(n_q)).reshape((n_q,) + (1,) * (q.ndim - 1) + (n_q,))
    pert = np.concatenate([q[None] + E, q[None] - E], axis=0)
    H, _ = _hamiltonian(chart, pert, np.broadcast_to(p, pert.shape), d)
    # non-finite rows (diverged shooting trials) pass through untouched
    with np.errstate(invalid="ignore"):
        return np.moveaxis((H[:n_q] - H[n_q:]) / (2.0 * fd_step), 0, -1)


def _ham_rhs(chart, q, p, d, fd_step):
    H, c = _hamiltonian(chart, q, p, d)
    dq = _dH_dp(chart, q, p, d, c)
    if chart.is_flat:
        # H depends on q only through nu: dH/dnu_{ai} = px_a c_i
        px = p[..., :d]
        dp_nu = -px[..., :, None] * c[..., None, :]
        dp = np.concatenate(
            [np.zeros_like(px), dp_nu.reshape(q.shape[:-1] + (d * d,))], axis=-1
        )
        return dq, dp
    dp = -_dH_dq(chart, q, p, d, fd_step)
    return dq, dp


def _ham_flow(chart, q0, p0, d, T, n_steps, fd_step, store_path=False):
    """RK4 integration of Hamilton's equations; batched over leading axes."""
    h = T / n_steps
    q, p = q0.copy(), p0.copy()
    path = None
    if store_path:
        path = np.empty((n_steps + 1,) + q.shape)
        path[0] = q
    for t in range(n_steps):
        k1q, k1p = _ham_rhs(chart, q, p, d, fd_step)
        k2q, k2p = _ham_rhs(chart, q + 0.5 * h * k1q, p + 0.5 * h * k1p, d, fd_step)
        k3q, k3p = _ham_rhs(chart, q + 0.5 * h * k2q, p + 0.5 * h * k2p, d, fd_step)
        k4q, k4p = _ham_rhs(chart, q + h * k3q, p + h * k3p, d, fd_step)
        q = q + h * (k1q + 2 * k2q + 2 * k3q + k4q) / 6.0
        p = p + h * (k1p + 2 * k2p + 2 * k3p + k4p) / 6.0
        if store_path:
            path[t + 1] = q
    return q, p, path


def mpp_shoot(u: FramePoint, y, opts: MppOptions = MppOptions()) -> MppResult:
    """Most probable path from the frame point u to the fiber over y.

    Solves for the initial momentum by Gauss-Newton on the stacked residual
    (base endpoint mismatch, vertical momentum at the endpoint); the vertical
    endpoint condition is the transversality that picks the energy-minimizing
    path among those hitting the fiber, while the fiber endpoint itself stays
    free. Returns sq_distance = 2 T H(q0, p0).
    """
    if u.k != u.d:
        raise ValueError("mpp_shoot needs a full frame (k = d)")
    chart = u.chart
    d = u.d
    y = _check_point(chart, np.asarray(y, dtype=float))
    q0 = np.concatenate([u.x, u.nu.reshape(-1)])
    n_p = d + d * d
    T = 1.0

    def residual(p0_batch):
        qT, pT, _ = _ham_flow(
            chart, np.broadcast_to(q0, p0_batch.shape[:-1] + (n_p,)).copy(),
            p0_batch, d, T, opts.n_steps, opts.fd_step,
        )
        return np.concatenate([qT[..., :d] - y, pT[..., d:]], axis=-1)

    p0 = np.zeros(n_p)
    r = residual(p0[None])[0]
    best = (np.linalg.norm(r), p0.copy())
    for _ in range(opts.max_iter):
        if np.linalg.norm(r) < opts.tol:
            break
        h = 1e-6
        pert = np.concatenate([p0[None] + h * np.eye(n_p), p0[None] - h * np.eye(n_p)])
        R = residual(pert)
        J = (R[:n_p] - R[n_p:]).T / (2 * h)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, r, rcond=None)[0]
        # backtracking on the residual norm
        scale = 1.0
        base_norm = np.linalg.norm(r)
        while scale > 1e-8:
            cand = p0 - scale * step
            rc = residual(cand[None])[0]
            if np.linalg.norm(rc) < base_norm:
                p0, r = cand, rc
                break
            scale *= 0.5
        else:
            break
        if np.linalg.norm(r) < best[0]:
            best = (np.linalg.norm(r), p0.copy())
    if np.linalg.norm(r) > best[0]:
        p0 = best[1]
        r = residual(p0[None])[0]
    res_norm = float(np.linalg.norm(r[:d]))
    if res_norm > 1e-5:
        raise RuntimeError(f"mpp shooting did not converge: residual {res_norm:.3e}")
    H0, _ = _hamiltonian(chart, q0, p0, d)
    _, _, path = _ham_flow(chart, q0, p0, d, T, opts.n_steps, opts.fd_step, store_path=True)
    return MppResult(
        initial_momentum=p0,
        path=path[:, :d],
        sq_distance=float(2.0 * T * H0),
        endpoint_residual=res_norm,
    )


@dataclass(frozen=True)
class MppEstimate:
    frame: FramePoint
    objective_trace: list
    hit_lambda_floor: bool


def _sq_distances_batch(chart, q0, data, n_steps, fd_step, max_iter, p_init=None):
    """Shoot to every datum at once; returns (sq_distances, momenta)."""
    d = chart.dim
    N = data.shape[0]
    n_p = d + d * d
    if p_init is not None:
        P = p_init.copy()
    else:
        # start from the flat-geometry solution p_x = (nu nu^T)^{-1} (y - x),
        # exact on flat charts and close enough to dodge the spurious local
        # residual minima a zero start can fall into
        nu0 = q0[d:].reshape(d, d)
        Sigma0 = nu0 @ nu0.T
        P = np.zeros((N, n_p))
        P[:, :d] = np.linalg.solve(Sigma0, (data - q0[:d]).T).T
    Q0 = np.broadcast_to(q0, (N, n_p)).copy()

    def residuals(Pb, reps):
        qT, pT, _ = _ham_flow(
            chart, np.broadcast_to(q0, Pb.shape[:-1] + (n_p,)).copy(),
            Pb, d, 1.0, n_steps, fd_step,
        )
        return np.concatenate([qT[..., :d] - reps, pT[..., d:]], axis=-1)

    R = residuals(P, data)
    for _ in range(max_iter):
        norms = np.linalg.norm(R, axis=-1)
        if np.all(norms < 1e-9):
            break
        h = 1e-6
        eye = np.eye(n_p)
        pert = np.concatenate(
            [P[:, None, :] + h * eye[None], P[:, None, :] - h * eye[None]], axis=1
        )  # (N, 2 n_p, n_p)
        reps = np.repeat(data[:, None, :], 2 * n_p, axis=1)
        Rp = residuals(pert.reshape(-1, n_p), reps.reshape(-1, d)).reshape(N, 2 * n_p, n_p)
        J = np.swapaxes(Rp[:, :n_p] - Rp[:, n_p:], 1, 2) / (2 * h)
        try:
            steps = np.linalg.solve(J, R[..., None])[..., 0]
        except np.linalg.LinAlgError:
            steps = np.stack(
                [np.linalg.lstsq(J[i], R[i], rcond=None)[0] for i in range(N)]
            )
        P_new = P - steps
        R_new = residuals(P_new, data)
        worse = np.linalg.norm(R_new, axis=-1) > np.linalg.norm(R, axis=-1)
        # halve only the rows that got worse
        scale = np.ones(N)
        for _bt in range(12):
            if not np.any(worse):
                break
            scale[worse] *= 0.5
            P_try = P - scale[:, None] * steps
            R_try = residuals(P_try, data)
            improved = worse & (np.linalg.norm(R_try, axis=-1) <= np.linalg.norm(R, axis=-1))
            P_new[improved] = P_try[improved]
            R_new[improved] = R_try[improved]
            worse = worse & ~improved
        P, R = P_new, R_new
    final_norms = np.linalg.norm(R[:, :d], axis=-1)
    if np.any(final_norms > 1e-4):
        bad = int(np.argmax(final_norms))
        raise RuntimeError(
            f"mpp shooting failed for datum {bad}: residual {final_norms[bad]:.3e}"
        )
    H0, _ = _hamiltonian(chart, Q0, P, d)
    return 2.0 * H0, P


def mpp_estimate(data, chart: ManifoldChart, init: FramePoint, opts: Optional[dict] = None) -> MppEstimate:
    """Small-variance frame estimation: minimize the MPP energy objective.

    The objective is sum_i sq_distance(u, y_i) + 2 N log frame_volume(u),
    the squared-distance analogue of the Gaussian negative log-likelihood;
    descent is by finite-difference gradients with per-iterate warm-started
    shooting, and frame scales are floored at lambda = 1e-4 (flagged when
    active, which signals an unbounded-below objective).
    """
    data = np.asarray(data, dtype=float)
    _check_point(chart, data)
    o = {"max_iter": 30, "step_size": 0.1, "n_steps": 120, "fd_step": 1e-6,
         "shoot_iter": 40, "lambda_floor": 1e-4, "fd_rel": 1e-4}
    if opts:
        o.update(opts)
    d = chart.dim
    if init.k != d:
        raise ValueError("mpp_estimate needs a full initial frame (k = d)")
    N = data.shape[0]
    z = np.concatenate([init.x, init.nu.reshape(-1)])
    warm = {"P": None}
    hit_floor = False

    def volume(zv):
        u = FramePoint(zv[:d], zv[d:].reshape(d, d), chart)
        return frame_volume(u)

    def objective(zv, warm_P=None):
        # candidates where shooting fails (typically near-degenerate frames
        # proposed by the line search) score as +inf and are rejected
        q0 = zv.copy()
        try:
            sq, P = _sq_distances_batch(
                chart, q0, data, o["n_steps"], o["fd_step"], o["shoot_iter"], p_init=warm_P
            )
        except RuntimeError:
            return np.inf, warm_P
        return float(np.sum(sq) + 2.0 * N * np.log(volume(zv))), P

    f0, P0 = objective(z)
    if not np.isfinite(f0):
        raise RuntimeError("mpp shooting failed at the initial frame")
    warm["P"] = P0
    trace = [f0]
    step = o["step_size"]
    for _ in range(o["max_iter"]):
        grad = np.empty_like(z)
        h = o["fd_rel"] * np.maximum(np.abs(z), 0.1)
        for i in range(len(z)):
            e = np.zeros_like(z)
            e[i] = h[i]
            fp, _ = objective(z + e, warm["P"])
            fm, _ = objective(z - e, warm["P"])
            # no usable slope in coordinates whose perturbations fail
            grad[i] = (fp - fm) / (2 * h[i]) if np.isfinite(fp - fm) else 0.0
        gn = np.linalg.norm(grad)
        if gn == 0:
            break
        direction = -grad / gn
        alpha = step
        moved = False
        while alpha > 1e-10:
            z_try = z + alpha * direction
            # floor the frame scales
            u_try = ModelParams(
                m=z_try[:d], W=z_try[d:].reshape(d, d), sigma=1.0, chart=chart
            )
            clamped = _clamp_lambdas(u_try, o["lambda_floor"])
            if not np.allclose(clamped.W, u_try.W):
                hit_floor = True
            z_try = np.concatenate([clamped.m, clamped.W.reshape(-1)])
            f_try, P_try = objective(z_try, warm["P"])
            if f_try < trace[-1]:
                z = z_try
                warm["P"] = P_try
                trace.append(f_try)
                moved = True
                break
            alpha *= 0.5
        if not moved:
            break
    u_final = FramePoint(z[:d], z[d:].reshape(d, d), chart)
    return MppEstimate(frame=u_final, objective_trace=trace, hit_lambda_floor=hit_floor)
