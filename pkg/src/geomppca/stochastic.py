"""The anisotropic stochastic model: driving noise and its development.

The model mu(m, W, sigma) evolves a rank-k frame W and a full reference frame
R by stochastic development: base increments combine the structured channel
W dxhat with isotropic noise sigma R deps, and both frames ride along by
parallel transport. Integration uses a Heun predictor-corrector step, whose
limit is the Stratonovich equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frame_bundle import DomainExit, g_orthonormal_basis
from .geometry import ManifoldChart, _check_point, christoffel_directional
from .seeding import derived_seed

DEFAULT_STEPS = 100
_MAX_RESAMPLE = 100


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the anisotropic model: base point, rank-k frame, noise level.

    ``W`` columns span the principal directions in chart coordinates; the
    axis variance convention is that a column w explains endpoint variance
    ``|w|_g^2 * T`` along its direction. ``sigma`` scales an isotropic noise
    channel carried by the g-orthonormalized reference frame at m.
    """

    m: np.ndarray
    W: np.ndarray
    sigma: float
    chart: ManifoldChart
    T: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "T", float(self.T))
        _check_point(self.chart, m)
        d = self.chart.dim
        if W.shape[0] != d or not 0 <= W.shape[1] <= d:
            raise ValueError(f"W must be (d, k) with 0 <= k <= d, got {W.shape}")
        if W.shape[1] and np.linalg.matrix_rank(W) < W.shape[1]:
            raise ValueError("W must have full column rank")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def d(self) -> int:
        return self.chart.dim

    @property
    def k(self) -> int:
        return self.W.shape[1]

    @property
    def is_elliptic(self) -> bool:
        """True when the per-step covariance W W^T + sigma^2 R R^T is full rank."""
        return self.sigma > 0 or self.k == self.d

    def reference_frame(self) -> np.ndarray:
        """The g-orthonormalized coordinate basis at m carrying the noise channel."""
        return g_orthonormal_basis(self.chart, self.m)


@dataclass(frozen=True)
class DrivingIncrements:
    """Euclidean driving noise for one trajectory: latent and isotropic channels."""

    dt: float
    latent: np.ndarray  # (n, k), N(0, dt) entries
    noise: np.ndarray  # (n, d), N(0, dt) entries
    seed: int

    @property
    def n(self) -> int:
        return self.latent.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """A developed sample path with both frames and the driving latent path."""

    times: np.ndarray  # (n+1,)
    base: np.ndarray  # (n+1, d)
    frameW: np.ndarray  # (n+1, d, k)
    frameR: np.ndarray  # (n+1, d, d)
    latent: np.ndarray  # (n+1, k), cumulative driving path


@dataclass(frozen=True)
class ForwardSamples:
    trajectories: list
    endpoints: np.ndarray  # (N, d)
    rejections: int


def simulate_driving(k: int, d: int, n: int, T: float, seed: int) -> DrivingIncrements:
    """Draw the Euclidean driving increments; bitwise reproducible from the seed.

    The latent block is drawn before the noise block; both have i.i.d.
    N(0, dt) entries with dt = T / n.
    """
    if n < 1:
        raise ValueError("need at least one step")
    dt = float(T) / n
    rng = np.random.default_rng(seed)
    root = np.sqrt(dt)
    latent = root * rng.standard_normal((n, k))
    noise = root * rng.standard_normal((n, d))
    return DrivingIncrements(dt=dt, latent=latent, noise=noise, seed=int(seed))


def _combined_step(chart, x, C, du):
    """One Heun step of the joint system d(x, C) = fields(x, C) o du.

    ``C`` stacks all transported frame columns, ``du`` the matching driving
    increments (noise columns pre-scaled by sigma). Batched over leading axes.
    """
    dx1 = np.einsum("...aj,...j->...a", C, du)
    if chart.is_flat:
        return dx1, np.zeros_like(C)
    dC1 = -christoffel_directional(chart, x, dx1) @ C
    dx2 = np.einsum("...aj,...j->...a", C + dC1, du)
    dC2 = -christoffel_directional(chart, x + dx1, dx2) @ (C + dC1)
    return 0.5 * (dx1 + dx2), 0.5 * (dC1 + dC2)


def _develop_batch(params: ModelParams, latents, noises):
    """Develop a batch of driving paths; latents (B, n, k), noises (B, n, d).

    Returns (base, frameW, frameR) with a leading batch axis and n+1 path
    entries, plus a boolean mask of rows that stayed inside the chart domain.
    """
    chart = params.chart
    d, k = params.d, params.k
    B, n = latents.shape[0], latents.shape[1]
    R0 = params.reference_frame()
    x = np.broadcast_to(params.m, (B, d)).copy()
    C = np.broadcast_to(np.concatenate([params.W, R0], axis=1), (B, d, k + d)).copy()
    du = np.concatenate([latents, params.sigma * noises], axis=2)

    base = np.empty((B, n + 1, d))
    frames = np.empty((B, n + 1, d, k + d))
    base[:, 0] = x
    frames[:, 0] = C
    ok = np.ones(B, dtype=bool)
    for t in range(n):
        dx, dC = _combined_step(chart, x, C, du[:, t])
        x = x + dx
        C = C + dC
        ok &= chart.in_domain(x)
        base[:, t + 1] = x
        frames[:, t + 1] = C
    return base, frames[:, :, :, :k], frames[:, :, :, k:], ok


def develop_stochastic(params: ModelParams, drive: DrivingIncrements) -> Trajectory:
    """Develop one driving realization into a sample path of the model."""
    if drive.latent.shape[1] != params.k or drive.noise.shape[1] != params.d:
        raise ValueError("driving increments do not match the model dimensions")
    n = drive.n
    base, fW, fR, ok = _develop_batch(
        params, drive.latent[None], drive.noise[None]
    )
    if not ok[0]:
        raise DomainExit("sample path left the chart domain")
    times = np.linspace(0.0, params.T, n + 1)
    latent = np.concatenate([np.zeros((1, params.k)), np.cumsum(drive.latent, axis=0)])
    return Trajectory(times=times, base=base[0], frameW=fW[0], frameR=fR[0], latent=latent)


def forward_samples(params: ModelParams, N: int, n: int = DEFAULT_STEPS, seed: int = 0) -> ForwardSamples:
    """Draw N independent sample paths; per-sample seeds derive from (seed, index).

    Paths that exit the chart domain are rejected and redrawn with a fresh
    derived seed; the count of rejections is reported.
    """
    chart = params.chart
    d, k = params.d, params.k
    latents = np.empty((N, n, k))
    noises = np.empty((N, n, d))
    drives = []
    for i in range(N):
        drv = simulate_driving(k, d, n, params.T, derived_seed(seed, i))
        latents[i] = drv.latent
        noises[i] = drv.noise
        drives.append(drv)
    base, fW, fR, ok = _develop_batch(params, latents, noises)

    rejections = 0
    for i in np.flatnonzero(~ok):
        accepted = False
        for retry in range(1, _MAX_RESAMPLE + 1):
            rejections += 1
            drv = simulate_driving(k, d, n, params.T, derived_seed(seed, i, retry))
            b, w, r, row_ok = _develop_batch(params, drv.latent[None], drv.noise[None])
            if row_ok[0]:
                base[i], fW[i], fR[i] = b[0], w[0], r[0]
                drives[i] = drv
                accepted = True
                break
        if not accepted:
            raise DomainExit(f"sample {i} rejected {_MAX_RESAMPLE} times")

    times = np.linspace(0.0, params.T, n + 1)
    trajectories = []
    for i in range(N):
        latent = np.concatenate([np.zeros((1, k)), np.cumsum(drives[i].latent, axis=0)])
        trajectories.append(
            Trajectory(times=times, base=base[i], frameW=fW[i], frameR=fR[i], latent=latent)
        )
    return ForwardSamples(
        trajectories=trajectories, endpoints=base[:, -1].copy(), rejections=rejections
    )
