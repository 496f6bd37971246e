import numpy as np
import numpy.testing as npt
import pytest

from mrfrecon.acquisition import (
    GOLDEN_ANGLE_RAD,
    AcquisitionOperator,
    Trajectory,
    density_compensation,
    make_trajectory,
    simulate_coil_maps,
    truncate_acceleration,
)


def make_random_operator(seed, n=16, coils=2, s=3, frames=12, kind="golden_radial"):
    rng = np.random.default_rng(seed)
    traj = make_trajectory(kind, n, d=n, frames=frames)
    basis = np.linalg.qr(
        rng.standard_normal((frames, s)) + 1j * rng.standard_normal((frames, s))
    )[0]
    return AcquisitionOperator(simulate_coil_maps(coils, n), traj, basis)


# --- trajectories -----------------------------------------------------------


def test_golden_radial_geometry():
    traj = make_trajectory("golden_radial", 32, d=32, frames=5)
    # frame 0 horizontal
    assert np.allclose(traj.points[0, :, 1], 0.0)
    # pairwise-equal angular increments of the golden angle
    angles = np.arctan2(traj.points[:, -1, 1], traj.points[:, -1, 0])
    inc = np.diff(np.unwrap(angles))
    npt.assert_allclose(inc, inc[0], atol=1e-12)
    npt.assert_allclose(np.rad2deg(inc[0]) % 360.0, 111.246, atol=1e-3)


def test_trajectory_band_invariant():
    for kind in ("golden_radial", "cartesian_full", "cartesian_lines"):
        traj = make_trajectory(kind, 16, d=16, frames=7)
        assert np.all(np.abs(traj.points) <= 8.0 + 1e-9)


def test_cartesian_full_covers_grid():
    traj = make_trajectory("cartesian_full", 8, frames=2)
    assert traj.d == 64
    pts = {tuple(p) for p in traj.points[0]}
    assert len(pts) == 64


def test_cartesian_lines_cycle():
    traj = make_trajectory("cartesian_lines", 8, frames=10)
    assert traj.d == 8
    # line index cycles through the grid
    assert traj.points[0, 0, 1] == -4.0
    assert traj.points[8, 0, 1] == -4.0


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown"):
        make_trajectory("spiral", 16, d=16, frames=1)


def test_out_of_band_rejected():
    with pytest.raises(ValueError, match="band"):
        Trajectory(kind="x", matrix=8, points=np.full((1, 1, 2), 9.0))


# --- acceleration truncation -------------------------------------------------


def test_truncate_paper_factors():
    traj = make_trajectory("golden_radial", 8, d=4, frames=1000)
    assert truncate_acceleration(traj, 10).frames == 100
    assert truncate_acceleration(traj, 1).frames == 1000
    assert truncate_acceleration(traj, 1000).frames == 1
    arr = np.zeros((1000, 2, 4))
    assert truncate_acceleration(arr, 10).shape[0] == 100


def test_truncate_keeps_leading_frames():
    traj = make_trajectory("golden_radial", 8, d=4, frames=20)
    cut = truncate_acceleration(traj, 4)
    npt.assert_array_equal(cut.points, traj.points[:5])


def test_truncate_empty_error():
    traj = make_trajectory("golden_radial", 8, d=4, frames=3)
    with pytest.raises(ValueError):
        truncate_acceleration(traj, 4)


# --- coil maps ---------------------------------------------------------------


def test_coil_maps_unit_rss():
    maps = simulate_coil_maps(8, 24)
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    npt.assert_allclose(rss, 1.0, atol=1e-12)


def test_single_coil_is_ones():
    npt.assert_array_equal(simulate_coil_maps(1, 12), np.ones((1, 12, 12)))


# --- operator ----------------------------------------------------------------


def test_forward_of_zero_is_zero():
    op = make_random_operator(0)
    assert np.all(op.forward(np.zeros((3, 16, 16), complex)) == 0)
    assert np.all(op.adjoint(np.zeros(op.kspace_shape, complex)) == 0)


def test_forward_superposition():
    op = make_random_operator(1)
    rng = np.random.default_rng(10)
    x1 = rng.standard_normal((3, 16, 16)) + 1j * rng.standard_normal((3, 16, 16))
    x2 = rng.standard_normal((3, 16, 16)) + 1j * rng.standard_normal((3, 16, 16))
    a, b = 0.7 - 1.1j, 2.0 + 0.4j
    lhs = op.forward(a * x1 + b * x2)
    rhs = a * op.forward(x1) + b * op.forward(x2)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


@pytest.mark.parametrize("kind", ["golden_radial", "cartesian_lines"])
@pytest.mark.parametrize("coils,s", [(1, 1), (2, 3), (4, 5)])
def test_adjoint_dot_test(kind, coils, s):
    op = make_random_operator(2, coils=coils, s=s, kind=kind)
    rng = np.random.default_rng(20 + coils + s)
    for _ in range(3):
        x = rng.standard_normal((s, 16, 16)) + 1j * rng.standard_normal((s, 16, 16))
        y = rng.standard_normal(op.kspace_shape) + 1j * rng.standard_normal(
            op.kspace_shape
        )
        hx = op.forward(x)
        lhs = np.vdot(hx, y)
        rhs = np.vdot(x, op.adjoint(y))
        assert abs(lhs - rhs) / (np.linalg.norm(hx) * np.linalg.norm(y)) < 1e-6


def test_point_at_k0_gives_constant_image():
    traj = Trajectory(kind="point", matrix=8, points=np.zeros((1, 1, 2)))
    op = AcquisitionOperator(np.ones((1, 8, 8), complex), traj, np.array([[1.0 + 0j]]))
    img = op.adjoint(np.ones((1, 1, 1), complex))
    npt.assert_allclose(img, img[0, 0, 0], rtol=1e-10)


def test_shape_validation():
    op = make_random_operator(3)
    with pytest.raises(ValueError, match="TSMI"):
        op.forward(np.zeros((2, 16, 16), complex))
    with pytest.raises(ValueError, match="k-space"):
        op.adjoint(np.zeros((1, 1, 1), complex))


def test_operator_norm_against_materialized_matrix():
    # orthonormal-style H: full Cartesian, unit coil, s=L=1
    n = 8
    traj = make_trajectory("cartesian_full", n, frames=1)
    op = AcquisitionOperator(np.ones((1, n, n), complex), traj, np.array([[1.0 + 0j]]))
    lam = op.estimate_operator_norm(iters=40)
    m = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n * n):
        e = np.zeros((1, n, n), complex)
        e.flat[i] = 1.0
        m[:, i] = op.adjoint(op.forward(e)).ravel()
    exact = np.linalg.eigvalsh((m + m.conj().T) / 2).max()
    npt.assert_allclose(lam, exact, rtol=1e-6)
    npt.assert_allclose(exact, n * n, rtol=1e-10)


def test_operator_norm_self_consistency():
    op = make_random_operator(4, n=32, coils=2, s=3, frames=16)
    a = op.estimate_operator_norm(iters=30)
    b = op.estimate_operator_norm(iters=60)
    assert abs(a - b) / b < 1e-3


def test_zero_operator_norm():
    n = 8
    traj = make_trajectory("golden_radial", n, d=n, frames=4)
    op = AcquisitionOperator(np.zeros((1, n, n), complex), traj, np.ones((4, 1), complex))
    assert op.estimate_operator_norm(iters=5) == 0.0


def test_operator_norm_iters_validation():
    op = make_random_operator(5)
    with pytest.raises(ValueError):
        op.estimate_operator_norm(iters=0)


def test_basis_shorter_than_trajectory_rejected():
    n = 8
    traj = make_trajectory("golden_radial", n, d=n, frames=10)
    with pytest.raises(ValueError, match="frames"):
        AcquisitionOperator(np.ones((1, n, n), complex), traj, np.ones((4, 2), complex))


def test_gradient_step_never_increases_fidelity():
    for seed in range(5):
        op = make_random_operator(100 + seed, n=16, coils=2, s=3, frames=10)
        rng = np.random.default_rng(seed)
        y = rng.standard_normal(op.kspace_shape) + 1j * rng.standard_normal(
            op.kspace_shape
        )
        lam = op.estimate_operator_norm(iters=30)
        x = np.zeros((3, 16, 16), complex)
        prev = np.inf
        for _ in range(8):
            resid = y - op.forward(x)
            fid = float(np.vdot(resid, resid).real)
            assert fid <= prev * (1 + 1e-9)
            prev = fid
            x = x + (1.0 / lam) * op.adjoint(resid)


def test_backprojection_exact_at_r1_cartesian(small_dict, short_seq):
    grid, sub = small_dict
    n = 12
    traj = make_trajectory("cartesian_full", n, frames=grid.n_frames)
    op = AcquisitionOperator(simulate_coil_maps(2, n), traj, sub)
    rng = np.random.default_rng(6)
    x = rng.standard_normal((sub.s, n, n)) + 1j * rng.standard_normal((sub.s, n, n))
    xbp = op.backproject(op.forward(x))
    assert np.linalg.norm(xbp - x) / np.linalg.norm(x) < 1e-10


def test_density_compensation_shapes():
    traj = make_trajectory("golden_radial", 16, d=16, frames=4)
    w = density_compensation(traj)
    assert w.shape == (4, 16)
    assert np.all(w > 0)
    flat = density_compensation(make_trajectory("cartesian_full", 8, frames=2))
    npt.assert_allclose(flat, 1.0 / 64)
