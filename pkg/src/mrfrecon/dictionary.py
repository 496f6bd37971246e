"""MRF dictionary construction, SVD subspace compression, and matching."""

from dataclasses import dataclass, field

import numpy as np

from .epg import DEFAULT_K_MAX, simulate_epg_batch
from .maps import QMaps

DEFAULT_T1_RANGE_MS = (100.0, 4000.0)
DEFAULT_T2_RANGE_MS = (10.0, 600.0)
DEFAULT_T1_COUNT = 60
DEFAULT_T2_COUNT = 50


def default_grid_values():
    """Log-spaced (T1, T2) value lists used when no grid is configured."""
    t1 = np.geomspace(*DEFAULT_T1_RANGE_MS, DEFAULT_T1_COUNT)
    t2 = np.geomspace(*DEFAULT_T2_RANGE_MS, DEFAULT_T2_COUNT)
    return t1, t2


def valid_pairs(t1_values, t2_values):
    """All (t1, t2) combinations with t2 <= t1, in row-major grid order."""
    t1g, t2g = np.meshgrid(t1_values, t2_values, indexing="ij")
    keep = t2g <= t1g
    return t1g[keep], t2g[keep]


@dataclass
class DictionaryGrid:
    """Normalized fingerprints over a (T1, T2) grid.

    atoms has unit-norm rows; atom_norms keeps the pre-normalization norms so
    proton density can be de-scaled after matching. atom_t1_ms/atom_t2_ms map
    an atom index back to its grid values.
    """

    t1_values_ms: np.ndarray
    t2_values_ms: np.ndarray
    atoms: np.ndarray
    atom_norms: np.ndarray
    atom_t1_ms: np.ndarray
    atom_t2_ms: np.ndarray
    seq: object = field(repr=False, default=None)

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def n_frames(self):
        return self.atoms.shape[1]


@dataclass
class Subspace:
    """Temporal SVD basis: (L, s) with orthonormal columns, descending order."""

    basis: np.ndarray
    singular_values: np.ndarray

    @property
    def s(self):
        return self.basis.shape[1]

    @property
    def n_frames(self):
        return self.basis.shape[0]


def build_dictionary(seq, t1_values_ms=None, t2_values_ms=None, k_max=DEFAULT_K_MAX):
    """Simulate and normalize one fingerprint per valid (t1, t2) grid pair.

    Pairs with t2 > t1 are excluded. Raises if the grid is empty or any atom
    has zero norm.
    """
    if t1_values_ms is None or t2_values_ms is None:
        d1, d2 = default_grid_values()
        t1_values_ms = d1 if t1_values_ms is None else t1_values_ms
        t2_values_ms = d2 if t2_values_ms is None else t2_values_ms
    t1_values = np.sort(np.asarray(t1_values_ms, dtype=float))
    t2_values = np.sort(np.asarray(t2_values_ms, dtype=float))
    if t1_values.size == 0 or t2_values.size == 0:
        raise ValueError("grid value lists must be non-empty")

    atom_t1, atom_t2 = valid_pairs(t1_values, t2_values)
    if atom_t1.size == 0:
        raise ValueError("empty dictionary: every grid pair has t2 > t1")

    atoms = simulate_epg_batch(seq, atom_t1, atom_t2, k_max=k_max)
    norms = np.linalg.norm(atoms, axis=1)
    if np.any(norms == 0.0):
        j = int(np.argmin(norms))
        raise ValueError(
            f"degenerate zero-norm atom at (t1={atom_t1[j]:g} ms, t2={atom_t2[j]:g} ms)"
        )
    atoms = atoms / norms[:, None]
    return DictionaryGrid(
        t1_values_ms=t1_values,
        t2_values_ms=t2_values,
        atoms=atoms,
        atom_norms=norms,
        atom_t1_ms=atom_t1,
        atom_t2_ms=atom_t2,
        seq=seq,
    )


def compute_subspace(grid, s):
    """Top-s right singular vectors of the atom matrix (temporal directions)."""
    n_atoms, n_frames = grid.atoms.shape
    if not 1 <= s <= min(n_frames, n_atoms):
        raise ValueError(f"s must lie in [1, {min(n_frames, n_atoms)}], got {s}")
    _, sv, vh = np.linalg.svd(grid.atoms, full_matrices=False)
    return Subspace(basis=vh[:s].conj().T.copy(), singular_values=sv)


def compress(tsmi_full, sub):
    """Project length-L channel data onto the subspace: x -> basis^H x."""
    x = np.asarray(tsmi_full)
    if x.shape[0] != sub.n_frames:
        raise ValueError(
            f"expected {sub.n_frames} channels (full length), got {x.shape[0]}"
        )
    return np.tensordot(sub.basis.conj(), x, axes=(0, 0))


def decompress(tsmi_s, sub):
    """Expand s-channel data back to length L: z -> basis z."""
    z = np.asarray(tsmi_s)
    if z.shape[0] != sub.s:
        raise ValueError(f"expected {sub.s} channels (compressed), got {z.shape[0]}")
    return np.tensordot(sub.basis, z, axes=(1, 0))


def compressed_atoms(grid, sub):
    """Compressed, re-normalized atoms and their PD de-scaling factors.

    Returns (unit_atoms (n_atoms, s), scale (n_atoms,)) where scale maps a
    matched correlation magnitude back to proton density.
    """
    catoms = grid.atoms @ sub.basis.conj()
    cnorms = np.linalg.norm(catoms, axis=1)
    if np.any(cnorms == 0.0):
        raise ValueError("an atom vanishes in the subspace; increase s")
    return catoms / cnorms[:, None], grid.atom_norms * cnorms


def _match_arrays(x_flat, unit_atoms, scale):
    """Exhaustive inner-product matching over flattened voxels.

    x_flat: (channels, n_vox). Returns (atom index, pd) per voxel; ties break
    to the lowest atom index via argmax.
    """
    corr = np.abs(unit_atoms.conj() @ x_flat)
    jstar = np.argmax(corr, axis=0)
    best = corr[jstar, np.arange(x_flat.shape[1])]
    pd = best / scale[jstar]
    return jstar, pd


def _matching_table(tsmi, grid, sub):
    channels = tsmi.shape[0]
    if channels == grid.n_frames:
        return grid.atoms, grid.atom_norms
    if sub is not None and channels == sub.s:
        return compressed_atoms(grid, sub)
    raise ValueError(
        f"data has {channels} channels; dictionary is length {grid.n_frames}"
        + ("" if sub is None else f" with subspace s={sub.s}")
    )


def dictionary_match(tsmi, grid, sub=None, mask=None):
    """Match every voxel against the dictionary and estimate T1/T2/PD.

    tsmi is (channels, H, W) with channels either the full length L or the
    subspace size s (pass `sub` for compressed data). The search is
    exhaustive; matching is invariant to a global complex phase per voxel.
    """
    if grid.n_atoms == 0:
        raise ValueError("empty dictionary")
    tsmi = np.asarray(tsmi)
    unit_atoms, scale = _matching_table(tsmi, grid, sub)
    h, w = tsmi.shape[1:]
    x_flat = tsmi.reshape(tsmi.shape[0], -1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        sel = mask.reshape(-1)
        x_flat = x_flat[:, sel]
    jstar, pd = _match_arrays(x_flat, unit_atoms, scale)

    def paint(values):
        img = np.zeros(h * w, dtype=float)
        if mask is None:
            img[:] = values
        else:
            img[mask.reshape(-1)] = values
        return img.reshape(h, w)

    out_mask = np.ones((h, w), dtype=bool) if mask is None else mask
    return QMaps(
        t1_ms=paint(grid.atom_t1_ms[jstar]),
        t2_ms=paint(grid.atom_t2_ms[jstar]),
        pd=paint(pd),
        mask=out_mask,
    )
