"""Frame bundle machinery: horizontal vector fields, parallel transport,
deterministic development and anti-development of curves.

A point of the rank-k frame bundle is a chart point x together with a d x k
matrix nu of linearly independent tangent vectors (columns). Horizontal
vector fields live in chart-induced coordinates (x, nu) and have a base
component (d,) and a frame component (d, k).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DomainError, ManifoldChart, _check_point, christoffel_directional


class FrameRankError(ValueError):
    """Frame columns are not linearly independent."""


class DomainExit(RuntimeError):
    """A simulated path left the chart domain."""


@dataclass(frozen=True)
class FramePoint:
    """A chart point with a rank-k frame in its tangent space."""

    x: np.ndarray
    nu: np.ndarray
    chart: ManifoldChart

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "nu", nu)
        _check_point(self.chart, x)
        if nu.ndim != 2 or nu.shape[0] != self.chart.dim:
            raise ValueError(f"frame must be ({self.chart.dim}, k), got {nu.shape}")
        k = nu.shape[1]
        if not 1 <= k <= self.chart.dim:
            raise ValueError(f"frame rank k={k} must satisfy 1 <= k <= d")
        if np.linalg.matrix_rank(nu) < k:
            raise FrameRankError("frame columns are linearly dependent")

    @property
    def d(self) -> int:
        return self.chart.dim

    @property
    def k(self) -> int:
        return self.nu.shape[1]


def g_orthonormal_basis(chart: ManifoldChart, x, k: int | None = None) -> np.ndarray:
    """Gram-Schmidt orthonormalization of the chart coordinate basis w.r.t. G(x).

    Returns a (d, k) matrix whose columns are g-orthonormal. This is the
    reference frame used for the isotropic noise channel of the stochastic
    model; it is canonical given the chart coordinates.
    """
    x = np.asarray(x, dtype=float)
    G = chart.metric(x)
    d = chart.dim
    k = d if k is None else k
    cols = []
    for i in range(d):
        v = np.zeros(d)
        v[i] = 1.0
        for b in cols:
            v = v - (b @ G @ v) * b
        norm = np.sqrt(v @ G @ v)
        if norm < 1e-14:
            raise FrameRankError("degenerate metric in Gram-Schmidt")
        cols.append(v / norm)
    return np.stack(cols[:k], axis=1)


def orthonormal_frame(chart: ManifoldChart, x, k: int | None = None) -> FramePoint:
    """FramePoint carrying the g-orthonormalized coordinate basis at x."""
    return FramePoint(np.asarray(x, dtype=float), g_orthonormal_basis(chart, x, k), chart)


def horizontal_basis(u: FramePoint):
    """Horizontal lifts H_1..H_k at u.

    Returns ``(base, frame)`` where ``base[:, i]`` is the base component of
    H_i (equal to frame column i by construction) and ``frame[:, :, i]`` is
    the (d, k) frame component of H_i.
    """
    Gamma = u.chart.christoffel(u.x)
    base = u.nu.copy()
    # frame[a, j, i] = -Gamma^a_bc nu^b_i nu^c_j, so frame[:, :, i] is the
    # (d, k) frame component of H_i
    frame = -np.einsum("abc,bi,cj->aji", Gamma, u.nu, u.nu)
    return base, frame


def _transport_increment(chart: ManifoldChart, x, dx, M):
    """Heun update increment for parallel transport of frame columns M along dx."""
    if chart.is_flat:
        return np.zeros_like(M)
    d1 = -christoffel_directional(chart, x, dx) @ M
    d2 = -christoffel_directional(chart, x + dx, dx) @ (M + d1)
    return 0.5 * (d1 + d2)


def transport_frames(chart: ManifoldChart, base_path, nu0) -> np.ndarray:
    """Parallel transport of nu0 along a discrete base path; all intermediate frames.

    base_path has shape (m, d); the return value has shape (m, d, k) with
    entry 0 equal to nu0.
    """
    base_path = np.asarray(base_path, dtype=float)
    if not np.all(chart.in_domain(base_path)):
        raise DomainError(f"transport path leaves the domain of chart {chart.name!r}")
    nu = np.asarray(nu0, dtype=float)
    out = np.empty((len(base_path),) + nu.shape)
    out[0] = nu
    for t in range(len(base_path) - 1):
        dx = base_path[t + 1] - base_path[t]
        nu = nu + _transport_increment(chart, base_path[t], dx, nu)
        out[t + 1] = nu
    return out


def parallel_transport(chart: ManifoldChart, base_path, nu0) -> np.ndarray:
    """Frame obtained by parallel transport of nu0 along base_path."""
    return transport_frames(chart, base_path, nu0)[-1]


def _develop_step(chart: ManifoldChart, x, nu, dlat):
    """One Heun step of the development ODE dx = nu dlat, dnu = -Gamma(dx) nu."""
    dx1 = nu @ dlat
    if chart.is_flat:
        return dx1, np.zeros_like(nu)
    dnu1 = -christoffel_directional(chart, x, dx1) @ nu
    dx2 = (nu + dnu1) @ dlat
    dnu2 = -christoffel_directional(chart, x + dx1, dx2) @ (nu + dnu1)
    return 0.5 * (dx1 + dx2), 0.5 * (dnu1 + dnu2)


def develop(u0: FramePoint, latent_path) -> list[FramePoint]:
    """Development of a discrete curve in R^k onto the manifold.

    ``latent_path`` has shape (m, k) and starts at the origin; the result is
    the sequence of frame points rolling the curve out through u0's frame.
    """
    latent_path = np.asarray(latent_path, dtype=float)
    chart = u0.chart
    x = u0.x.copy()
    nu = u0.nu.copy()
    out = [u0]
    for t in range(len(latent_path) - 1):
        dlat = latent_path[t + 1] - latent_path[t]
        dx, dnu = _develop_step(chart, x, nu, dlat)
        x = x + dx
        nu = nu + dnu
        if not np.all(chart.in_domain(x)):
            raise DomainExit(f"development left the chart domain at step {t + 1}")
        out.append(FramePoint(x, nu, chart))
    return out


def metric_pseudo_inverse(chart: ManifoldChart, x, nu) -> np.ndarray:
    """nu^+ = (nu^T G nu)^{-1} nu^T G, the g-orthogonal left inverse of nu."""
    G = chart.metric(np.asarray(x, dtype=float))
    A = nu.T @ G @ nu
    return np.linalg.solve(A, nu.T @ G)


def anti_develop(u0: FramePoint, base_path) -> np.ndarray:
    """Latent curve whose development through u0 reproduces base_path.

    Inverts the development scheme step by step: each latent increment is
    initialized with the metric pseudo-inverse nu^+ dx and polished by a fixed
    point iteration on the forward step, so develop(u0, anti_develop(u0, p))
    retraces p to integrator tolerance.
    """
    base_path = np.asarray(base_path, dtype=float)
    chart = u0.chart
    x = u0.x.copy()
    nu = u0.nu.copy()
    m = len(base_path)
    k = nu.shape[1]
    latent = np.zeros((m, k))
    for t in range(m - 1):
        dx_target = base_path[t + 1] - x
        dlat = metric_pseudo_inverse(chart, x, nu) @ dx_target
        for _ in range(12):
            dx, _dnu = _develop_step(chart, x, nu, dlat)
            err = dx_target - dx
            if np.linalg.norm(err) < 1e-14:
                break
            # effective frame of the Heun step, used as the local linearization
            dnu1 = _transport_like(chart, x, nu, dlat)
            eff = nu + 0.5 * dnu1
            dlat = dlat + metric_pseudo_inverse(chart, x, eff) @ err
        dx, dnu = _develop_step(chart, x, nu, dlat)
        latent[t + 1] = latent[t] + dlat
        x = x + dx
        nu = nu + dnu
    return latent


def _transport_like(chart, x, nu, dlat):
    if chart.is_flat:
        return np.zeros_like(nu)
    dx1 = nu @ dlat
    return -christoffel_directional(chart, x, dx1) @ nu


def sub_inner(u: FramePoint, v, w) -> float:
    """Inner product <v, w> induced by the frame: (u^{-1} v) . (u^{-1} w).

    Requires a full frame (k = d).
    """
    if u.k != u.d:
        raise FrameRankError("sub_inner needs a full frame (k = d)")
    a = np.linalg.solve(u.nu, np.asarray(v, dtype=float))
    b = np.linalg.solve(u.nu, np.asarray(w, dtype=float))
    return float(a @ b)


def frame_volume(u: FramePoint) -> float:
    """sqrt(det(nu^T G nu)): the g-volume spanned by the frame columns."""
    if u.k != u.d:
        raise FrameRankError("frame_volume needs a full frame (k = d)")
    G = u.chart.metric(u.x)
    A = u.nu.T @ G @ u.nu
    det = np.linalg.det(A)
    if det <= 0:
        raise FrameRankError("frame Gram matrix is not positive definite")
    return float(np.sqrt(det))


def _pack(x, nu):
    return np.concatenate([x, nu.reshape(-1)])


def _unpack(z, d, k):
    return z[:d], z[d:].reshape(d, k)


def _h_field(chart, z, i, d, k):
    """Horizontal field H_i as a function on packed (x, nu) coordinates."""
    x, nu = _unpack(z, d, k)
    Gamma = chart.christoffel(x)
    dx = nu[:, i]
    dnu = -np.einsum("abc,b,cj->aj", Gamma, dx, nu)
    return _pack(dx, dnu)


def horizontal_bracket(chart: ManifoldChart, u: FramePoint, i: int, j: int):
    """Lie bracket [H_i, H_j] at u by central finite differences.

    The commutator is evaluated as DH_j . H_i - DH_i . H_j with the field
    Jacobians taken by central differences in the chart-induced (x, nu)
    coordinates; the two terms are assembled identically under an index swap,
    so antisymmetry is exact. Returns ``(base, frame)`` components; a nonzero
    frame component with vanishing base component is the vertical curvature
    obstruction to integrability of the horizontal distribution.
    """
    d, k = u.d, u.k
    if not (0 <= i < k and 0 <= j < k):
        raise ValueError("bracket indices must lie in [0, k)")
    z0 = _pack(u.x, u.nu)
    hi = _h_field(chart, z0, i, d, k)
    hj = _h_field(chart, z0, j, d, k)
    step = 1e-4

    def jac_apply(field_idx, vec):
        out = np.zeros_like(z0)
        for a in range(len(z0)):
            e = np.zeros_like(z0)
            e[a] = step
            fp = _h_field(chart, z0 + e, field_idx, d, k)
            fm = _h_field(chart, z0 - e, field_idx, d, k)
            out += (fp - fm) / (2.0 * step) * vec[a]
        return out

    bracket = jac_apply(j, hi) - jac_apply(i, hj)
    return _unpack(bracket, d, k)
