"""Frame bundle tests: horizontal fields, transport, holonomy, development.

Closed-form oracles: the holonomy of a spherical cap (2 pi (1 - cos theta)),
the analytic sphere exponential for developed straight lines, and direct
evaluations for flat charts.
"""

import numpy as np
import pytest

from geomppca import (
    DomainExit,
    FramePoint,
    FrameRankError,
    anti_develop,
    develop,
    flat,
    frame_volume,
    g_orthonormal_basis,
    horizontal_basis,
    horizontal_bracket,
    metric,
    orthonormal_frame,
    parallel_transport,
    sphere,
    sphere_exp,
    sub_inner,
)
from geomppca.frame_bundle import transport_frames

SP = sphere()
FL = flat(2)


def latitude_circle(colat, n):
    """Chart path of the colatitude circle traversed once, n+1 points."""
    # stereographic projection from the south pole maps colatitude theta to
    # chart radius sin(theta) / (1 + cos(theta)) = tan(theta / 2)
    r = np.tan(colat / 2.0)
    phi = np.linspace(0.0, 2.0 * np.pi, n + 1)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


# ---------------------------------------------------------------------------
# FramePoint and bases


def test_frame_point_validation():
    u = orthonormal_frame(SP, [0.1, 0.2])
    assert u.d == 2 and u.k == 2
    with pytest.raises(FrameRankError):
        FramePoint([0.0, 0.0], np.array([[1.0, 2.0], [2.0, 4.0]]), SP)
    with pytest.raises(ValueError):
        FramePoint([0.0, 0.0], np.ones((2, 3)), SP)
    with pytest.raises(ValueError):
        FramePoint([0.0, 0.0], np.ones((3, 1)), SP)


def test_g_orthonormal_basis_gram_identity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.uniform(-0.8, 0.8, size=2)
        B = g_orthonormal_basis(SP, x)
        G = metric(SP, x)
        assert np.linalg.norm(B.T @ G @ B - np.eye(2)) < 1e-12


def test_orthonormal_frame_rank_k():
    u = orthonormal_frame(SP, [0.3, -0.1], k=1)
    assert u.nu.shape == (2, 1)
    G = metric(SP, u.x)
    assert abs(u.nu[:, 0] @ G @ u.nu[:, 0] - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# horizontal basis


def test_horizontal_basis_flat_chart():
    nu = np.array([[1.0, 0.5], [0.0, 2.0]])
    u = FramePoint([0.7, -0.3], nu, FL)
    base, frame = horizontal_basis(u)
    assert np.array_equal(base, nu)
    assert np.array_equal(frame, np.zeros((2, 2, 2)))


def test_horizontal_basis_base_components_are_frame_columns_bitwise():
    u = orthonormal_frame(SP, [0.4, 0.1])
    base, _ = horizontal_basis(u)
    assert np.array_equal(base, u.nu)


def test_horizontal_basis_zero_frame_component_at_origin():
    u = orthonormal_frame(SP, [0.0, 0.0])
    _, frame = horizontal_basis(u)
    assert np.allclose(frame, 0.0, atol=1e-15)


def test_horizontal_field_integration_matches_parallel_transport():
    # integrating along H_1 for a short time agrees with transporting the
    # frame along the base curve to O(h^2)
    x0 = np.array([0.35, -0.15])
    u = orthonormal_frame(SP, x0)
    h = 1e-3
    m = 50
    x, nu = x0.copy(), u.nu.copy()
    path = [x.copy()]
    for _ in range(m):
        ub = FramePoint(x, nu, SP)
        base, frame = horizontal_basis(ub)
        x = x + h * base[:, 0]
        nu = nu + h * frame[:, :, 0]
        path.append(x.copy())
    transported = parallel_transport(SP, np.array(path), u.nu)
    assert np.linalg.norm(nu - transported) < 5e-4


# ---------------------------------------------------------------------------
# parallel transport


def test_flat_transport_is_identity():
    nu = np.array([[1.0, 0.3], [0.2, 1.5]])
    path = np.array([[0.0, 0.0], [0.5, 0.2], [1.0, -0.4]])
    assert np.array_equal(parallel_transport(FL, path, nu), nu)


def test_transport_preserves_gram_matrix_smooth_path():
    path = latitude_circle(np.pi / 3, 4000)
    nu = g_orthonormal_basis(SP, path[0]) @ np.array([[1.2, 0.3], [0.0, 0.7]])
    out = parallel_transport(SP, path, nu)
    g0 = nu.T @ metric(SP, path[0]) @ nu
    g1 = out.T @ metric(SP, path[-1]) @ out
    assert np.linalg.norm(g1 - g0) < 1e-6


def test_transport_preserves_gram_matrix_jagged_path():
    rng = np.random.default_rng(5)
    x0 = np.array([0.2, 0.1])
    nu = g_orthonormal_basis(SP, x0) @ np.array([[1.2, 0.3], [0.0, 0.7]])
    steps = np.cumsum(rng.normal(scale=0.01, size=(400, 2)), axis=0)
    path = np.vstack([x0, x0 + steps])
    out = parallel_transport(SP, path, nu)
    g0 = nu.T @ metric(SP, path[0]) @ nu
    g1 = out.T @ metric(SP, path[-1]) @ out
    assert np.linalg.norm(g1 - g0) < 1e-4


@pytest.mark.parametrize("colat", [np.pi / 6, np.pi / 3, np.pi / 2])
def test_sphere_holonomy_of_latitude_circle(colat):
    # oracle: holonomy of a spherical cap rotates the frame by 2 pi (1 - cos).
    # The rotation angle is tracked with unwrapping along the path so full
    # turns are not lost.
    n = 10_000
    path = latitude_circle(colat, n)
    nu0 = g_orthonormal_basis(SP, path[0])
    frames = transport_frames(SP, path, nu0)
    G = SP.metric(path)
    # coordinates of transported columns in the initial g-orthonormal basis,
    # measured with the local metric: c[t] = nu0^T G(x_t) frames[t]
    c = np.einsum("ab,tbc->tac", nu0.T, np.einsum("tab,tbc->tac", G, frames))
    ang = np.unwrap(np.arctan2(c[:, 1, 0], c[:, 0, 0]))
    total = ang[-1] - ang[0]
    expected = 2.0 * np.pi * (1.0 - np.cos(colat))
    assert abs(abs(total) - expected) < 1e-3


def test_transport_out_of_domain_raises():
    ch = sphere(r_max=1.0)
    path = np.array([[0.0, 0.0], [2.0, 0.0]])
    with pytest.raises(Exception):
        parallel_transport(ch, path, np.eye(2) * 0.5)


# ---------------------------------------------------------------------------
# development


def test_flat_development_is_identity_on_paths():
    u = FramePoint(np.zeros(2), np.eye(2), FL)
    rng = np.random.default_rng(9)
    lat = np.vstack([np.zeros(2), np.cumsum(rng.normal(size=(30, 2)), axis=0)])
    out = develop(u, lat)
    bases = np.array([p.x for p in out])
    assert np.array_equal(bases, lat)


def test_constant_latent_path_gives_constant_output():
    u = orthonormal_frame(SP, [0.2, 0.0])
    lat = np.zeros((10, 2))
    out = develop(u, lat)
    for p in out:
        assert np.array_equal(p.x, u.x)
        assert np.array_equal(p.nu, u.nu)


def test_develop_straight_line_matches_sphere_exponential():
    # oracle: development of a straight segment through an orthonormal frame
    # is a geodesic; compare the chart endpoint with the analytic exponential
    u = orthonormal_frame(SP, [0.0, 0.0])
    L = 1.3
    direction = np.array([np.cos(0.7), np.sin(0.7)])
    n = 10_000
    lat = np.linspace(0.0, L, n + 1)[:, None] * direction[None, :]
    out = develop(u, lat)
    # embedded tangent vector of the initial velocity nu @ direction
    J = np.zeros((3, 2))
    h = 1e-7
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        J[:, j] = (SP.embed(u.x + e) - SP.embed(u.x - e)) / (2 * h)
    # nu @ direction has unit g-norm, so scaling by L gives the tangent whose
    # exponential sits at geodesic distance L
    v3 = L * (J @ (u.nu @ direction))
    target = sphere_exp(SP.embed(u.x), v3)
    assert np.linalg.norm(SP.embed_inv(target) - out[-1].x) < 1e-4


def test_develop_domain_exit_raises():
    ch = sphere(r_max=0.5)
    u = orthonormal_frame(ch, [0.0, 0.0])
    lat = np.linspace(0.0, 5.0, 200)[:, None] * np.array([[1.0, 0.0]])
    with pytest.raises(DomainExit):
        develop(u, lat)


@pytest.mark.parametrize("k", [1, 2])
def test_anti_develop_inverts_develop(k):
    rng = np.random.default_rng(21)
    u = orthonormal_frame(SP, [0.15, -0.2], k=k)
    lat = np.vstack(
        [np.zeros(k), np.cumsum(rng.normal(scale=0.05, size=(60, k)), axis=0)]
    )
    out = develop(u, lat)
    base_path = np.array([p.x for p in out])
    recovered = anti_develop(u, base_path)
    assert np.max(np.abs(recovered - lat)) < 1e-8


def test_anti_develop_flat_exact():
    u = FramePoint(np.zeros(2), np.array([[2.0, 0.0], [0.0, 0.5]]), FL)
    rng = np.random.default_rng(22)
    lat = np.vstack([np.zeros(2), np.cumsum(rng.normal(size=(20, 2)), axis=0)])
    base_path = np.array([p.x for p in develop(u, lat)])
    assert np.max(np.abs(anti_develop(u, base_path) - lat)) < 1e-12


# ---------------------------------------------------------------------------
# sub-Riemannian inner product and frame volume


def test_sub_inner_flat_identity():
    u = FramePoint(np.zeros(2), np.eye(2), FL)
    e1 = np.array([1.0, 0.0])
    assert sub_inner(u, e1, e1) == 1.0


def test_sub_inner_flat_diag():
    u = FramePoint(np.zeros(2), np.diag([2.0, 1.0]), FL)
    e1 = np.array([1.0, 0.0])
    assert abs(sub_inner(u, e1, e1) - 0.25) < 1e-15


def test_sub_inner_rotation_invariance():
    rng = np.random.default_rng(33)
    nu = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    th = 0.734
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    v, w = rng.normal(size=2), rng.normal(size=2)
    a = sub_inner(FramePoint(np.zeros(2), nu, FL), v, w)
    b = sub_inner(FramePoint(np.zeros(2), nu @ R, FL), v, w)
    assert abs(a - b) < 1e-12


def test_sub_inner_requires_full_frame():
    u = orthonormal_frame(SP, [0.0, 0.0], k=1)
    with pytest.raises(FrameRankError):
        sub_inner(u, np.ones(2), np.ones(2))


def test_frame_volume_orthonormal_is_one():
    u = orthonormal_frame(SP, [0.3, 0.4])
    assert abs(frame_volume(u) - 1.0) < 1e-12


def test_frame_volume_flat_diag():
    u = FramePoint(np.zeros(2), np.diag([2.0, 3.0]), FL)
    assert abs(frame_volume(u) - 6.0) < 1e-12


def test_frame_volume_homogeneity():
    u = orthonormal_frame(SP, [0.25, -0.1])
    s = 1.7
    us = FramePoint(u.x, s * u.nu, SP)
    assert abs(frame_volume(us) - s**2) < 1e-10


def test_frame_volume_requires_full_frame():
    u = orthonormal_frame(SP, [0.0, 0.0], k=1)
    with pytest.raises(FrameRankError):
        frame_volume(u)


# ---------------------------------------------------------------------------
# horizontal bracket (curvature diagnostic)


def test_bracket_flat_vanishes():
    u = FramePoint(np.zeros(2), np.array([[1.0, 0.2], [0.0, 0.8]]), FL)
    base, frame = horizontal_bracket(FL, u, 0, 1)
    assert np.linalg.norm(base) + np.linalg.norm(frame) < 1e-6


def test_bracket_sphere_is_vertical_and_nonzero():
    u = orthonormal_frame(SP, [0.2, 0.1])
    base, frame = horizontal_bracket(SP, u, 0, 1)
    assert np.linalg.norm(base) < 1e-6
    assert np.linalg.norm(frame) > 0.1


def test_bracket_antisymmetry_exact():
    u = orthonormal_frame(SP, [0.3, -0.2])
    b01, f01 = horizontal_bracket(SP, u, 0, 1)
    b10, f10 = horizontal_bracket(SP, u, 1, 0)
    assert np.array_equal(b01, -b10)
    assert np.array_equal(f01, -f10)


def test_bracket_index_validation():
    u = orthonormal_frame(SP, [0.0, 0.0])
    with pytest.raises(ValueError):
        horizontal_bracket(SP, u, 0, 2)
