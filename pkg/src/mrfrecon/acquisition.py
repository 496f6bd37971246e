"""The multi-coil, subspace-compressed non-uniform Fourier forward operator.

Composes, per timeframe: expansion of the s-channel TSMI through one row of
the temporal subspace basis, multiplication by each coil sensitivity map, and
non-uniform Fourier sampling along that frame's trajectory. The adjoint is the
exact conjugate transpose of this chain. Density compensation exists only in
the standalone back-projection path, never inside gradient iterations.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import nufft
from .dictionary import Subspace

# golden-angle spoke increment, 180/phi deg ~= 111.246 deg
GOLDEN_ANGLE_RAD = np.pi * (np.sqrt(5.0) - 1.0) / 2.0

TRAJECTORY_KINDS = ("golden_radial", "cartesian_full", "cartesian_lines")


@dataclass(frozen=True)
class Trajectory:
    """Per-frame k-space sample coordinates in cycles/FOV.

    points is (frames, d, 2) holding (kx, ky); every coordinate satisfies
    |k| <= matrix/2.
    """

    kind: str
    matrix: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 3 or pts.shape[2] != 2:
            raise ValueError("points must be (frames, d, 2)")
        if np.any(np.abs(pts) > 0.5 * self.matrix + 1e-9):
            raise ValueError("trajectory exceeds the band |k| <= matrix/2")
        object.__setattr__(self, "points", pts)

    @property
    def frames(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


def make_trajectory(kind, matrix, d=None, frames=1):
    """Construct a deterministic sampling trajectory.

    golden_radial: one radial spoke per frame, rotated by the golden angle;
    d equispaced samples covering [-matrix/2, matrix/2). Frame 0 is horizontal.
    cartesian_full: the complete integer grid every frame (d is forced to
    matrix^2); used by oracle tests and exact-recovery setups.
    cartesian_lines: one integer ky line per frame, cycling through the grid.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    n = int(matrix)
    if kind == "golden_radial":
        d = n if d is None else int(d)
        if d < 1:
            raise ValueError("d must be >= 1")
        radius = np.linspace(-0.5, 0.5, d, endpoint=False) * n
        angles = GOLDEN_ANGLE_RAD * np.arange(frames)
        kx = radius[None, :] * np.cos(angles)[:, None]
        ky = radius[None, :] * np.sin(angles)[:, None]
        pts = np.stack([kx, ky], axis=-1)
    elif kind == "cartesian_full":
        freqs = np.arange(n) - n // 2
        kxg, kyg = np.meshgrid(freqs, freqs, indexing="xy")
        grid = np.stack([kxg.ravel(), kyg.ravel()], axis=-1).astype(float)
        pts = np.broadcast_to(grid, (frames,) + grid.shape).copy()
    elif kind == "cartesian_lines":
        freqs = (np.arange(n) - n // 2).astype(float)
        lines = np.mod(np.arange(frames), n) - n // 2
        kx = np.broadcast_to(freqs, (frames, n)).copy()
        ky = np.repeat(lines[:, None], n, axis=1).astype(float)
        pts = np.stack([kx, ky], axis=-1)
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    return Trajectory(kind=kind, matrix=n, points=pts)


def truncate_acceleration(obj, r):
    """Keep only the first floor(L/r) frames of a trajectory or k-space array.

    The temporal subspace is NOT recomputed; basis rows beyond the retained
    frames are simply unused downstream.
    """
    if r < 1:
        raise ValueError("acceleration factor must be >= 1")
    if isinstance(obj, Trajectory):
        total = obj.frames
        keep = total // int(r)
        if keep < 1:
            raise ValueError(f"acceleration r={r} leaves no frames of {total}")
        return replace(obj, points=obj.points[:keep])
    arr = np.asarray(obj)
    keep = arr.shape[0] // int(r)
    if keep < 1:
        raise ValueError(f"acceleration r={r} leaves no frames of {arr.shape[0]}")
    return arr[:keep]


def simulate_coil_maps(n_coils, matrix):
    """Smooth complex coil sensitivities on a ring around the FOV.

    Gaussian magnitude profiles centered on a surrounding ring, linear phase
    pointing at each coil, normalized to unit root-sum-of-squares everywhere.
    A single coil returns an all-ones map (the convention assumed by the
    oracle tests).
    """
    n = int(matrix)
    if n_coils == 1:
        return np.ones((1, n, n), dtype=np.complex128)
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    cx = cy = (n - 1) / 2.0
    ring_r = 0.55 * n
    width = 0.45 * n
    maps = np.empty((n_coils, n, n), dtype=np.complex128)
    for c in range(n_coils):
        ang = 2.0 * np.pi * c / n_coils
        x0 = cx + ring_r * np.cos(ang)
        y0 = cy + ring_r * np.sin(ang)
        mag = np.exp(-((xx - x0) ** 2 + (yy - y0) ** 2) / (2.0 * width**2))
        phase = (
            2.0
            * np.pi
            * 0.7
            * (np.cos(ang) * (xx - cx) + np.sin(ang) * (yy - cy))
            / n
        )
        maps[c] = mag * np.exp(1j * (phase + ang))
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / rss


def density_compensation(traj):
    """Per-sample weights for the back-projection path.

    Flat 1/N^2 for integer Cartesian sampling: with an orthonormal full-length
    basis the frame sum hands back the identity, so r=1 back-projection is the
    exact inverse. Radial spokes get a ramp |k| with area normalization.
    Approximate by design: only the standalone back-projection uses these
    weights.
    """
    n = traj.matrix
    f, d = traj.frames, traj.d
    if nufft.is_integer_trajectory(traj.points, n):
        return np.full((f, d), 1.0 / (n * n), dtype=float)
    radius = np.hypot(traj.points[..., 0], traj.points[..., 1])
    dk = n / float(d)
    w = radius * (np.pi / f) * dk
    w[radius < dk / 2.0] = np.pi * dk**2 / (4.0 * f)
    return w / (n * n)


class AcquisitionOperator:
    """The composed forward model H and its exact adjoint.

    Args:
        coil_maps: (C, N, N) complex sensitivities.
        trajectory: Trajectory whose frame count can be at most the number of
            basis rows.
        subspace: Subspace (or raw (L, s) ndarray) giving temporal weights.
        oversamp, width: gridding NUFFT configuration.
    """

    def __init__(
        self,
        coil_maps,
        trajectory,
        subspace,
        oversamp=nufft.DEFAULT_OVERSAMP,
        width=nufft.DEFAULT_WIDTH,
    ):
        basis = subspace.basis if isinstance(subspace, Subspace) else np.asarray(subspace)
        maps = np.asarray(coil_maps, dtype=np.complex128)
        if maps.ndim != 3 or maps.shape[1] != maps.shape[2]:
            raise ValueError("coil_maps must be (C, N, N)")
        if maps.shape[1] != trajectory.matrix:
            raise ValueError("coil map size does not match trajectory matrix")
        if trajectory.frames > basis.shape[0]:
            raise ValueError(
                f"trajectory has {trajectory.frames} frames but basis only "
                f"{basis.shape[0]} rows"
            )
        self.coil_maps = maps
        self.trajectory = trajectory
        self.basis = np.asarray(basis, dtype=np.complex128)[: trajectory.frames]
        self.s = self.basis.shape[1]
        self.matrix = trajectory.matrix
        self.n_coils = maps.shape[0]
        self.plan = nufft.make_plan(
            trajectory.matrix, trajectory.points, oversamp=oversamp, width=width
        )
        self.dc_weights = density_compensation(trajectory)
        self._bp_mixing_inv = None

    @property
    def kspace_shape(self):
        return (self.trajectory.frames, self.n_coils, self.trajectory.d)

    def _check_image(self, x):
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.s, self.matrix, self.matrix):
            raise ValueError(
                f"expected TSMI of shape {(self.s, self.matrix, self.matrix)}, "
                f"got {x.shape}"
            )
        return x

    def _check_kspace(self, y):
        y = np.asarray(y, dtype=np.complex128)
        if y.shape != self.kspace_shape:
            raise ValueError(
                f"expected k-space of shape {self.kspace_shape}, got {y.shape}"
            )
        return y

    def forward(self, x):
        """TSMI (s, N, N) -> k-space (frames, C, d)."""
        x = self._check_image(x)
        frame_imgs = np.tensordot(self.basis, x, axes=(1, 0))  # (F, N, N)
        coil_imgs = frame_imgs[:, None, :, :] * self.coil_maps[None]
        return self.plan.forward(coil_imgs)

    def adjoint(self, y):
        """Exact conjugate transpose: k-space (frames, C, d) -> TSMI (s, N, N)."""
        y = self._check_kspace(y)
        coil_imgs = self.plan.adjoint(y)
        frame_imgs = np.sum(coil_imgs * self.coil_maps.conj()[None], axis=1)
        return np.tensordot(self.basis.conj(), frame_imgs, axes=(0, 0))

    def _bp_channel_mixing(self):
        """Channel response of the density-compensated normal operator.

        The DC'd single-frame normal operator has diagonal spatial gain equal
        to that frame's total weight, so the s x s temporal mixing of the
        back-projection is sum_t (sum_i w_ti) B^H[t] B[t]. Its (pseudo)inverse
        restores per-channel scales that frame truncation and spoke coverage
        would otherwise skew. Identity for full Cartesian sampling at r=1.
        """
        if self._bp_mixing_inv is None:
            gains = self.dc_weights.sum(axis=1)
            full_frames = self.trajectory.d == self.matrix**2 and isinstance(
                self.plan, nufft.CartesianExactPlan
            )
            if not full_frames:
                # complementary frames tile k-space jointly; their DC weights
                # are designed so the ensemble approximates the identity
                gains = gains / gains.sum()
            m = (self.basis.conj().T * gains) @ self.basis
            # truncated inverse: caps noise amplification of barely-covered
            # channels at 100x and is exact when m is well conditioned (r=1)
            self._bp_mixing_inv = np.linalg.pinv(m, rcond=1e-2, hermitian=True)
        return self._bp_mixing_inv

    def backproject(self, y, equalize=True):
        """Density-compensated adjoint; initialization/baseline input only.

        With equalize=True the temporal-coverage mixing inverse is applied on
        top, which dictionary matching needs at high acceleration; learned
        paths consume the plain density-compensated adjoint. Gradient
        iterations always use the pure adjoint.
        """
        y = self._check_kspace(y)
        u = self.adjoint(y * self.dc_weights[:, None, :])
        if not equalize:
            return u
        return np.tensordot(self._bp_channel_mixing(), u, axes=(1, 0))

    def estimate_operator_norm(self, iters=30, seed=0):
        """Largest eigenvalue of H^H H by power iteration from a fixed seed."""
        if iters < 1:
            raise ValueError("iters must be >= 1")
        rng = np.random.default_rng(seed)
        shape = (self.s, self.matrix, self.matrix)
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        lam = 0.0
        for _ in range(iters):
            w = self.adjoint(self.forward(v))
            norm_w = np.linalg.norm(w)
            if norm_w == 0.0:
                return 0.0
            lam = norm_w / np.linalg.norm(v)
            v = w / norm_w
        return float(lam)
