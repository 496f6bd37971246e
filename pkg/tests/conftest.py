import numpy as np
import pytest

from mrfrecon.dictionary import build_dictionary, compute_subspace
from mrfrecon.epg import SequenceParams, sinusoidal_flip_schedule


def naive_dft2(img, points):
    """O(D*d) direct evaluation of the package's Fourier convention.

    The independent oracle for every NUFFT test: y(k) = sum_n x[n] *
    exp(-2j*pi*(kx*(nx-N/2) + ky*(ny-N/2))/N) with img indexed [ny, nx].
    """
    n = img.shape[0]
    r = np.arange(n) - n // 2
    out = np.empty(len(points), dtype=complex)
    for i, (kx, ky) in enumerate(points):
        ex = np.exp(-2j * np.pi * kx * r / n)
        ey = np.exp(-2j * np.pi * ky * r / n)
        out[i] = (img * np.outer(ey, ex)).sum()
    return out


@pytest.fixture(scope="session")
def short_seq():
    """Small sequence shared by fast tests."""
    return SequenceParams(
        flip_angles_rad=sinusoidal_flip_schedule(60),
        tr_ms=10.0,
        te_ms=1.8,
        ti_ms=18.0,
        invert_first=True,
    )


@pytest.fixture(scope="session")
def paper_protocol_seq():
    """Constant 40 deg flips with TR=10, TE=1.8, TI=18 ms, L=100."""
    return SequenceParams(
        flip_angles_rad=np.full(100, np.deg2rad(40.0)),
        tr_ms=10.0,
        te_ms=1.8,
        ti_ms=18.0,
        invert_first=True,
    )


@pytest.fixture(scope="session")
def small_dict(short_seq):
    """Coarse dictionary + s=5 subspace for fast matching tests."""
    t1 = np.geomspace(200.0, 3000.0, 10)
    t2 = np.geomspace(20.0, 400.0, 8)
    grid = build_dictionary(short_seq, t1, t2)
    sub = compute_subspace(grid, 5)
    return grid, sub
