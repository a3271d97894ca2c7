"""Euclidean probabilistic PCA and tangent-space PCA baselines.

These are the linear comparison points: exact maximum likelihood PPCA in
R^d, its posterior latent means, and PPCA applied to Riemannian logarithms
in a single tangent space (the standard linearization the curved model is
meant to improve on).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frame_bundle import g_orthonormal_basis
from .geometry import ManifoldChart, _check_point, sphere_exp, sphere_log


@dataclass(frozen=True)
class EuclideanPPCAFit:
    """Closed-form maximum likelihood PPCA factors for Euclidean data."""

    m: np.ndarray
    W_ml: np.ndarray  # (d, k)
    sigma2_ml: float
    eigvals: np.ndarray  # all d sample covariance eigenvalues, descending


def ppca_fit(data, k: int) -> EuclideanPPCAFit:
    """Maximum likelihood probabilistic PCA of Euclidean data.

    The factors are W_ml = U_k (Lambda_k - sigma2 I)^(1/2) with sigma2 the
    mean of the d - k discarded sample covariance eigenvalues. Errors when
    the rank-k factor model is infeasible (lambda_k below the noise floor).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be (N, d)")
    N, d = data.shape
    if not 1 <= k <= d:
        raise ValueError(f"k={k} must satisfy 1 <= k <= d={d}")
    if N <= k:
        raise ValueError("need more data points than components")
    m = data.mean(axis=0)
    centered = data - m
    S = centered.T @ centered / N
    evals, evecs = np.linalg.eigh(S)
    idx = np.argsort(evals)[::-1]
    evals = evals[idx]
    evecs = evecs[:, idx]
    sigma2 = float(np.mean(evals[k:])) if k < d else 0.0
    if evals[k - 1] < sigma2:
        raise ValueError(
            f"rank-{k} model infeasible: eigenvalue {evals[k - 1]:.3e} below "
            f"noise floor {sigma2:.3e}"
        )
    W = evecs[:, :k] * np.sqrt(evals[:k] - sigma2)
    return EuclideanPPCAFit(m=m, W_ml=W, sigma2_ml=sigma2, eigvals=evals)


def ppca_posterior_mean(fit: EuclideanPPCAFit, y) -> np.ndarray:
    """Posterior mean latent coordinates (W^T W + sigma2 I)^{-1} W^T (y - m)."""
    y = np.asarray(y, dtype=float)
    W = fit.W_ml
    k = W.shape[1]
    M = W.T @ W + fit.sigma2_ml * np.eye(k)
    return np.linalg.solve(M, W.T @ (y - fit.m).T).T


def ppca_log_likelihood(fit: EuclideanPPCAFit, data) -> float:
    """Exact PPCA log-likelihood of data under the fitted factors."""
    data = np.asarray(data, dtype=float)
    d = data.shape[1]
    Sigma = fit.W_ml @ fit.W_ml.T + fit.sigma2_ml * np.eye(d)
    sign, logdet = np.linalg.slogdet(Sigma)
    centered = data - fit.m
    quad = np.einsum("na,na->n", centered, np.linalg.solve(Sigma, centered.T).T)
    return float(-0.5 * np.sum(d * np.log(2 * np.pi) + logdet + quad))


def frechet_mean(chart: ManifoldChart, data, step: float = 0.5, iters: int = 100) -> np.ndarray:
    """Frechet mean of sphere-chart data by gradient descent with the closed-form Log."""
    if chart.name != "sphere":
        raise ValueError("frechet_mean is implemented for the sphere chart")
    data = np.asarray(data, dtype=float)
    _check_point(chart, data)
    y = chart.embed(data)
    p = y.mean(axis=0)
    p = p / np.linalg.norm(p)
    for _ in range(iters):
        logs = sphere_log(p, y)
        p = sphere_exp(p, step * logs.mean(axis=0))
    return chart.embed_inv(p)


def _tangent_basis_at(chart: ManifoldChart, base) -> np.ndarray:
    """Embedded orthonormal basis of the tangent plane at a surface point.

    Columns are the pushforwards of the chart's g-orthonormal directions,
    re-orthonormalized in the embedding to remove finite-difference dust.
    """
    base = np.asarray(base, dtype=float)
    B = g_orthonormal_basis(chart, base)
    h = 1e-6
    cols = []
    for i in range(B.shape[1]):
        d_emb = (chart.embed(base + h * B[:, i]) - chart.embed(base - h * B[:, i])) / (2 * h)
        cols.append(d_emb)
    E = np.stack(cols, axis=1)
    q, r = np.linalg.qr(E)
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class TangentPCAResult:
    """PPCA of Riemannian logarithms in the tangent space at a base point."""

    base: np.ndarray  # chart point
    coords: np.ndarray  # (N, d) tangent coordinates of the data
    fit: EuclideanPPCAFit


def _numeric_log(chart: ManifoldChart, a, b, n_steps: int = 200, max_iter: int = 60):
    """Riemannian Log by geodesic boundary-value shooting in the chart."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = chart.dim

    def shoot(v0):
        x, v = a.copy(), v0.copy()
        h = 1.0 / n_steps

        def acc(state_x, state_v):
            Gamma = chart.christoffel(state_x)
            return -np.einsum("abc,b,c->a", Gamma, state_v, state_v)

        for _ in range(n_steps):
            k1x, k1v = v, acc(x, v)
            k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
            x = x + h * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0
            v = v + h * (k1v + 2 * k2v + 2 * k3v + k4v) / 6.0
        return x

    v0 = b - a
    for _ in range(max_iter):
        r = shoot(v0) - b
        if np.linalg.norm(r) < 1e-10:
            break
        J = np.empty((d, d))
        h = 1e-6 * max(1.0, np.linalg.norm(v0))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            J[:, j] = (shoot(v0 + e) - shoot(v0 - e)) / (2 * h)
        v0 = v0 - np.linalg.solve(J, r)
    else:
        raise RuntimeError("geodesic shooting did not converge")
    return v0


def tangent_pca(chart: ManifoldChart, data, base, k: int = 1) -> TangentPCAResult:
    """PPCA of the data mapped to a single tangent space by the Riemannian Log.

    ``base`` is a chart point or the string ``"frechet"``. On the sphere the
    closed-form Log is used; on other curved charts logarithms come from
    geodesic boundary-value shooting. Coordinates are taken in a
    g-orthonormal tangent basis, so the recovered eigenvalues are metric
    variances.
    """
    data = np.asarray(data, dtype=float)
    _check_point(chart, data)

    if isinstance(base, str):
        if base != "frechet":
            raise ValueError(f"unknown base spec {base!r}")
        if chart.is_flat:
            base_pt = data.mean(axis=0)
        else:
            base_pt = frechet_mean(chart, data)
    else:
        base_pt = np.asarray(base, dtype=float)
        _check_point(chart, base_pt)

    if chart.is_flat:
        coords = data - base_pt
    elif chart.name == "sphere":
        p = chart.embed(base_pt)
        logs = sphere_log(p, chart.embed(data))  # (N, 3) embedded tangent vectors
        E = _tangent_basis_at(chart, base_pt)  # (3, 2)
        coords = logs @ E
    else:
        B = g_orthonormal_basis(chart, base_pt)
        coords = np.empty((data.shape[0], chart.dim))
        for idx in range(data.shape[0]):
            v = _numeric_log(chart, base_pt, data[idx])
            coords[idx] = np.linalg.solve(B, v)
    fit = ppca_fit(coords, k)
    return TangentPCAResult(base=base_pt, coords=coords, fit=fit)
