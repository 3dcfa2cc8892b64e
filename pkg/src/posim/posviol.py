"""Positivity-violation rule shared by both generators.

A subject with latent propensity ``p_i`` is forced into exposure at a visit
when ``p_i >= pi`` and the confounder value lies in the poor-health region.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Region(enum.Enum):
    BELOW_TAU = "below"  # [0, tau): low CD4 is poor health
    ABOVE_TAU = "above"  # (tau, inf): high biomarker is poor health


@dataclass(frozen=True)
class PositivityPolicy:
    pi: float
    tau: float
    region: Region

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"exposure cut-off pi must lie in [0, 1], got {self.pi!r}")
        if self.region is Region.BELOW_TAU and self.tau < 0:
            raise ValueError("tau must be >= 0 for the below-tau region")

    def in_region(self, l):
        l = np.asarray(l, dtype=float)
        if self.region is Region.BELOW_TAU:
            return (l >= 0.0) & (l < self.tau)
        return l > self.tau


def is_forced(policy: PositivityPolicy, p_i, l):
    """True where exposure is assigned deterministically.

    Works elementwise on arrays; returns a Python bool for scalar input.
    """
    out = (np.asarray(p_i, dtype=float) >= policy.pi) & policy.in_region(l)
    if out.ndim == 0:
        return bool(out)
    return out
