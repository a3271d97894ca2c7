"""Chart-based surface geometry: metrics, Christoffel symbols, built-in surfaces.

A manifold is represented by a single coordinate chart carrying callables for
the metric, the Christoffel symbols and (for surfaces) an embedding into R^3.
All callables accept batched inputs with shape (..., d) and return arrays with
matching leading dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np

R_MAX_DEFAULT = 1e3
FD_STEP = 1e-5


class DomainError(ValueError):
    """A chart point lies outside the chart's domain of validity."""


@dataclass(frozen=True)
class ManifoldChart:
    """A manifold expressed in a single coordinate chart.

    Attributes
    ----------
    dim : intrinsic dimension d
    metric : callable, (..., d) -> (..., d, d), symmetric positive definite
    christoffel : callable, (..., d) -> (..., d, d, d) with layout [a, b, c]
        for Gamma^a_{bc}
    in_domain : callable, (..., d) -> (...) bool
    embed : optional callable, (..., d) -> (..., 3), surfaces only
    embed_inv : optional callable, right inverse of embed
    is_flat : True when the Christoffel symbols vanish identically; steppers
        use this to skip transport work
    """

    dim: int
    metric: Callable[[np.ndarray], np.ndarray]
    christoffel: Callable[[np.ndarray], np.ndarray]
    in_domain: Callable[[np.ndarray], np.ndarray]
    embed: Optional[Callable[[np.ndarray], np.ndarray]] = None
    embed_inv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""
    is_flat: bool = False
    params: tuple = field(default=())
    christoffel_dir: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None


def _check_point(chart: ManifoldChart, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != chart.dim:
        raise ValueError(
            f"point has dimension {x.shape[-1]}, chart {chart.name!r} has dim {chart.dim}"
        )
    ok = chart.in_domain(x)
    if not np.all(ok):
        raise DomainError(f"point outside domain of chart {chart.name!r}")
    return x


def metric(chart: ManifoldChart, x) -> np.ndarray:
    """Metric matrix G(x), domain-checked."""
    return chart.metric(_check_point(chart, x))


def christoffel(chart: ManifoldChart, x) -> np.ndarray:
    """Christoffel symbols Gamma^a_{bc}(x) with index layout [a, b, c]."""
    return chart.christoffel(_check_point(chart, x))


def christoffel_directional(chart: ManifoldChart, x, dx) -> np.ndarray:
    """Contraction M^a_c = Gamma^a_{bc}(x) dx^b without domain checks.

    Transport and development steppers only ever need the symbols contracted
    against a base increment; charts may provide a closed form avoiding the
    full (..., d, d, d) array.
    """
    if chart.christoffel_dir is not None:
        return chart.christoffel_dir(x, dx)
    return np.einsum("...abc,...b->...ac", chart.christoffel(x), dx)


def embed(chart: ManifoldChart, x) -> np.ndarray:
    """Embedding point F(x) in R^3 for surface charts."""
    if chart.embed is None:
        raise ValueError(f"chart {chart.name!r} has no embedding")
    return chart.embed(_check_point(chart, x))


def christoffel_from_metric(metric_fn, x, step: float = FD_STEP) -> np.ndarray:
    """Christoffel symbols by central finite differences of a metric callable.

    Used for user-supplied charts and as an oracle for the analytic formulas
    of the built-in surfaces.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    G = metric_fn(x)
    # dG[..., a, b, c] = d_c G_ab
    dG = np.empty(G.shape + (d,))
    for c in range(d):
        e = np.zeros(d)
        e[c] = step
        dG[..., c] = (metric_fn(x + e) - metric_fn(x - e)) / (2.0 * step)
    Ginv = np.linalg.inv(G)
    # Gamma^a_bc = 1/2 G^{ad} (d_b G_dc + d_c G_db - d_d G_bc); the t1 + t2
    # grouping keeps the lower-index symmetry exact in floating point
    t1 = np.einsum("...dcb->...dbc", dG)  # d_b G_dc  (layout [d, b, c])
    t2 = dG  # d_c G_db (layout [d, b, c])
    t3 = np.einsum("...bcd->...dbc", dG)  # d_d G_bc
    return 0.5 * np.einsum("...ad,...dbc->...abc", Ginv, t1 + t2 - t3)


# ---------------------------------------------------------------------------
# flat chart


def _flat_metric(d, x):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()


def _flat_christoffel(d, x):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1] + (d, d, d))


def _flat_in_domain(x):
    x = np.asarray(x, dtype=float)
    return np.all(np.isfinite(x), axis=-1)


def _flat_embed(x):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (3,))
    out[..., :d] = x
    return out


def _flat_embed_inv(d, y):
    y = np.asarray(y, dtype=float)
    return y[..., :d].copy()


def flat(d: int = 2) -> ManifoldChart:
    """Euclidean R^d as a single global chart (identity metric)."""
    if d < 1:
        raise ValueError("flat chart needs d >= 1")
    emb = _flat_embed if d <= 3 else None
    emb_inv = partial(_flat_embed_inv, d) if d <= 3 else None
    return ManifoldChart(
        dim=d,
        metric=partial(_flat_metric, d),
        christoffel=partial(_flat_christoffel, d),
        in_domain=_flat_in_domain,
        embed=emb,
        embed_inv=emb_inv,
        name=f"flat{d}",
        is_flat=True,
    )


# ---------------------------------------------------------------------------
# sphere in the stereographic chart (projection from the south pole)


def _stereo_embed(q):
    q = np.asarray(q, dtype=float)
    r2 = np.sum(q * q, axis=-1, keepdims=True)
    s = 1.0 + r2
    out = np.concatenate([2.0 * q, 1.0 - r2], axis=-1)
    return out / s


def _stereo_embed_inv(y):
    y = np.asarray(y, dtype=float)
    return y[..., :2] / (1.0 + y[..., 2:3])


def _stereo_jacobian(q):
    """Jacobian of the stereographic embedding, shape (..., 3, 2)."""
    q = np.asarray(q, dtype=float)
    r2 = np.sum(q * q, axis=-1)
    s = 1.0 + r2
    J = np.empty(q.shape[:-1] + (3, 2))
    for i in range(2):
        for j in range(2):
            J[..., i, j] = (2.0 / s) * ((1.0 if i == j else 0.0) - 2.0 * q[..., i] * q[..., j] / s)
    for j in range(2):
        J[..., 2, j] = -4.0 * q[..., j] / (s * s)
    return J


def _stereo_metric(q):
    q = np.asarray(q, dtype=float)
    r2 = np.sum(q * q, axis=-1)
    lam = 4.0 / (1.0 + r2) ** 2
    return lam[..., None, None] * np.eye(2)


def _conformal_christoffel(w):
    """Gamma^a_bc = delta_ab w_c + delta_ac w_b - delta_bc w_a for G = e^{2 phi} I, w = grad phi."""
    d = w.shape[-1]
    eye = np.eye(d)
    t1 = eye[..., :, :, None] * w[..., None, None, :]
    t2 = eye[..., :, None, :] * w[..., None, :, None]
    t3 = eye[..., None, :, :] * w[..., :, None, None]
    return t1 + t2 - t3


def _stereo_christoffel(q):
    q = np.asarray(q, dtype=float)
    r2 = np.sum(q * q, axis=-1, keepdims=True)
    w = -2.0 * q / (1.0 + r2)
    return _conformal_christoffel(w)


def _stereo_christoffel_dir(q, dx):
    """Gamma^a_{bc} dx^b = dx w^T + <dx, w> I - w dx^T for the conformal metric.

    In two dimensions this contraction is dot * I + s * J with J the quarter
    rotation, built here entrywise to keep the hot transport loops cheap.
    """
    q = np.asarray(q, dtype=float)
    dx = np.asarray(dx, dtype=float)
    q0, q1 = q[..., 0], q[..., 1]
    # overflow at extreme chart radii is benign: f underflows to zero and the
    # point is rejected by the domain check anyway; trial points from shooting
    # line searches may already carry non-finite coordinates
    with np.errstate(over="ignore", invalid="ignore"):
        f = -2.0 / (1.0 + q0 * q0 + q1 * q1)
        w0, w1 = f * q0, f * q1
        dx0, dx1 = dx[..., 0], dx[..., 1]
        dot = dx0 * w0 + dx1 * w1
        s = dx0 * w1 - w0 * dx1
    M = np.empty(dot.shape + (2, 2))
    M[..., 0, 0] = dot
    M[..., 0, 1] = s
    M[..., 1, 0] = -s
    M[..., 1, 1] = dot
    return M


def _radius_in_domain(r_max, x):
    x = np.asarray(x, dtype=float)
    # the check is routinely fed wild excursions; squared-norm overflow just
    # means "far outside" and must not warn
    with np.errstate(over="ignore"):
        return np.all(np.isfinite(x), axis=-1) & (
            np.sum(x * x, axis=-1) < r_max * r_max
        )


def sphere(r_max: float = R_MAX_DEFAULT) -> ManifoldChart:
    """Unit sphere, stereographic chart from the south pole.

    The chart covers the sphere minus the south pole; points with chart norm
    beyond ``r_max`` are treated as out of domain.
    """
    return ManifoldChart(
        dim=2,
        metric=_stereo_metric,
        christoffel=_stereo_christoffel,
        in_domain=partial(_radius_in_domain, r_max),
        embed=_stereo_embed,
        embed_inv=_stereo_embed_inv,
        name="sphere",
        christoffel_dir=_stereo_christoffel_dir,
    )


# ---------------------------------------------------------------------------
# ellipsoid: sphere chart composed with axis scaling diag(a, b, c)


def _ellipsoid_embed(axes, q):
    return _stereo_embed(q) * axes


def _ellipsoid_embed_inv(axes, y):
    y = np.asarray(y, dtype=float)
    return _stereo_embed_inv(y / axes)


def _stereo_hessian(q):
    """Second derivatives H[..., i, j, c] = d^2 F_i / dq_j dq_c, shape (..., 3, 2, 2)."""
    q = np.asarray(q, dtype=float)
    r2 = np.sum(q * q, axis=-1)
    s = 1.0 + r2
    s2 = s * s
    s3 = s2 * s
    H = np.empty(q.shape[:-1] + (3, 2, 2))
    for i in range(2):
        for j in range(2):
            for c in range(2):
                dij = 1.0 if i == j else 0.0
                dic = 1.0 if i == c else 0.0
                djc = 1.0 if j == c else 0.0
                H[..., i, j, c] = (
                    -4.0
                    * (dij * q[..., c] + dic * q[..., j] + djc * q[..., i])
                    / s2
                    + 16.0 * q[..., i] * q[..., j] * q[..., c] / s3
                )
    for j in range(2):
        for c in range(2):
            djc = 1.0 if j == c else 0.0
            H[..., 2, j, c] = -4.0 * djc / s2 + 16.0 * q[..., j] * q[..., c] / s3
    return H


def _ellipsoid_metric(axes, q):
    J = _stereo_jacobian(q) * np.asarray(axes)[:, None]
    Gram = np.einsum("...ia,...ib->...ab", J, J)
    return 0.5 * (Gram + np.swapaxes(Gram, -1, -2))


def _ellipsoid_christoffel(axes, q):
    a2 = np.asarray(axes) ** 2
    J = _stereo_jacobian(q)
    H = _stereo_hessian(q)
    # dG[..., a, b, c] = d_c G_ab with G = J^T diag(a^2) J; the second product
    # rule term is the exact transpose of the first, which keeps dG bitwise
    # symmetric in (a, b) and hence the lower-index symmetry of Gamma exact
    e1 = np.einsum("i,...iac,...ib->...abc", a2, H, J)
    dG = e1 + np.swapaxes(e1, -3, -2)
    G = _ellipsoid_metric(axes, q)
    Ginv = np.linalg.inv(G)
    t1 = np.einsum("...dcb->...dbc", dG)
    t2 = dG
    t3 = np.einsum("...bcd->...dbc", dG)
    return 0.5 * np.einsum("...ad,...dbc->...abc", Ginv, t1 + t2 - t3)


def ellipsoid(a: float, b: float, c: float, r_max: float = R_MAX_DEFAULT) -> ManifoldChart:
    """Ellipsoid with semi-axes (a, b, c), chart = sphere chart + axis scaling."""
    axes = (float(a), float(b), float(c))
    if min(axes) <= 0:
        raise ValueError("ellipsoid semi-axes must be positive")
    arr = np.array(axes)
    return ManifoldChart(
        dim=2,
        metric=partial(_ellipsoid_metric, arr),
        christoffel=partial(_ellipsoid_christoffel, arr),
        in_domain=partial(_radius_in_domain, r_max),
        embed=partial(_ellipsoid_embed, arr),
        embed_inv=partial(_ellipsoid_embed_inv, arr),
        name="ellipsoid",
        params=axes,
    )


def by_name(name: str, params=()) -> ManifoldChart:
    """Chart factory used by the command line interface."""
    if name == "sphere":
        return sphere()
    if name == "ellipsoid":
        if len(params) != 3:
            raise ValueError("ellipsoid needs three semi-axes")
        return ellipsoid(*params)
    if name.startswith("flat"):
        try:
            d = int(name[4:])
        except ValueError:
            raise ValueError(f"unknown chart name {name!r}") from None
        return flat(d)
    raise ValueError(f"unknown chart name {name!r}")


# ---------------------------------------------------------------------------
# closed-form sphere exponential / logarithm in embedding coordinates


def sphere_exp(p, v) -> np.ndarray:
    """Riemannian exponential on the unit sphere; p unit 3-vector, v tangent at p."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    small = nv < 1e-300
    nv_safe = np.where(small, 1.0, nv)
    out = np.cos(nv) * p + np.sin(nv) * v / nv_safe
    return np.where(small, p + v, out)


def sphere_log(p, q) -> np.ndarray:
    """Riemannian logarithm on the unit sphere. Errors for antipodal pairs."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = np.clip(np.sum(p * q, axis=-1, keepdims=True), -1.0, 1.0)
    w = q - c * p
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.any((c < -1.0 + 1e-12) & (nw < 1e-12)):
        raise ValueError("sphere_log undefined for antipodal points")
    theta = np.arctan2(nw, c)
    small = nw < 1e-300
    nw_safe = np.where(small, 1.0, nw)
    return np.where(small, 0.0 * p, theta * w / nw_safe)
