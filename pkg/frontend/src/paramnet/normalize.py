"""Invertible normalization between parameter units and the [0, 1] training space.

The loss is computed on normalized values so the three channels contribute on
comparable scales. kappa2 is mapped in log-space first (its prior is mostly
log-uniform mass near the low end); rho and theta map affinely from their
supports. The exact map is serialized into every checkpoint so predictions
can be de-normalized without ambiguity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CHANNELS = ("kappa2", "rho", "theta")

#: Parameter supports matching the dataset generator's priors.
SUPPORTS = {
    "kappa2": (1e-4, 2.0),
    "rho": (1.0, 7.0),
    "theta": (-math.pi / 2, math.pi / 2),
}


@dataclass(frozen=True)
class NormalizationMap:
    """Channel-wise affine map to [0, 1], log-space for kappa2."""

    supports: dict

    @classmethod
    def default(cls) -> "NormalizationMap":
        return cls(supports={k: tuple(v) for k, v in SUPPORTS.items()})

    def normalize(self, params: np.ndarray) -> np.ndarray:
        """(3, H, W) parameter units -> (3, H, W) in [0, 1]."""
        k_lo, k_hi = self.supports["kappa2"]
        r_lo, r_hi = self.supports["rho"]
        t_lo, t_hi = self.supports["theta"]
        out = np.empty_like(params, dtype=float)
        out[0] = (np.log(params[0]) - math.log(k_lo)) / (math.log(k_hi) - math.log(k_lo))
        out[1] = (params[1] - r_lo) / (r_hi - r_lo)
        out[2] = (params[2] - t_lo) / (t_hi - t_lo)
        return out

    def denormalize(self, normed: np.ndarray, clamp: bool = True) -> np.ndarray:
        """(3, H, W) in [0, 1] -> parameter units, clamped into supports."""
        values = np.asarray(normed, dtype=np.float64)
        if clamp:
            values = np.clip(values, 0.0, 1.0)
        k_lo, k_hi = self.supports["kappa2"]
        r_lo, r_hi = self.supports["rho"]
        t_lo, t_hi = self.supports["theta"]
        out = np.empty_like(values)
        out[0] = np.exp(math.log(k_lo) + values[0] * (math.log(k_hi) - math.log(k_lo)))
        out[1] = r_lo + values[1] * (r_hi - r_lo)
        out[2] = t_lo + values[2] * (t_hi - t_lo)
        if clamp:
            # exp/rounding can land one ulp outside; pin to the supports.
            for idx, name in enumerate(CHANNELS):
                lo, hi = self.supports[name]
                out[idx] = np.clip(out[idx], lo, hi)
        return out

    def to_dict(self) -> dict:
        return {"supports": {k: list(v) for k, v in self.supports.items()}}

    @classmethod
    def from_dict(cls, raw: dict) -> "NormalizationMap":
        return cls(supports={k: tuple(v) for k, v in raw["supports"].items()})
