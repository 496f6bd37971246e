"""Quantitative tissue property maps."""

from dataclasses import dataclass

import numpy as np


@dataclass
class QMaps:
    """Per-voxel T1/T2 (ms) and proton density images plus a validity mask.

    Outside the mask every map is zero; inside, t1 and t2 are positive and
    pd is non-negative.
    """

    t1_ms: np.ndarray
    t2_ms: np.ndarray
    pd: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        shapes = {self.t1_ms.shape, self.t2_ms.shape, self.pd.shape, self.mask.shape}
        if len(shapes) != 1:
            raise ValueError("all maps must share one shape")
        self.mask = self.mask.astype(bool)

    @property
    def shape(self):
        return self.t1_ms.shape

    def property_map(self, which):
        try:
            return {"t1": self.t1_ms, "t2": self.t2_ms, "pd": self.pd}[which]
        except KeyError:
            raise ValueError(f"unknown property {which!r}, expected t1/t2/pd") from None

    def zero_outside_mask(self):
        """Return a copy with everything outside the mask forced to zero."""
        m = self.mask
        return QMaps(
            t1_ms=np.where(m, self.t1_ms, 0.0),
            t2_ms=np.where(m, self.t2_ms, 0.0),
            pd=np.where(m, self.pd, 0.0),
            mask=m.copy(),
        )
