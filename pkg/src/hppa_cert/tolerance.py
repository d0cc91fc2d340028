"""Absolute-plus-relative tolerance used by every numerical inequality check."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

ENV_RTOL = "HPPA_CERT_TOL"


@dataclass(frozen=True)
class Tolerance:
    """Accept ``lhs <= rhs`` whenever ``lhs - rhs <= atol + rtol * scale``."""

    atol: float = 1e-12
    rtol: float = 1e-9

    def __post_init__(self):
        if not (self.atol >= 0 and self.rtol >= 0):
            raise ValueError("tolerances must be nonnegative")

    @classmethod
    def from_env(cls, atol: float = 1e-12, rtol: float = 1e-9) -> "Tolerance":
        raw = os.environ.get(ENV_RTOL)
        if raw:
            rtol = float(raw)
        return cls(atol=atol, rtol=rtol)

    def relative_excess(self, lhs, rhs):
        """``(lhs - rhs - atol) / scale``; the inequality passes iff this is ``<= rtol``."""
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), np.finfo(float).tiny)
        return (lhs - rhs - self.atol) / scale

    def holds(self, lhs, rhs) -> np.ndarray:
        return self.relative_excess(lhs, rhs) <= self.rtol

    def as_dict(self) -> dict:
        return {"atol": self.atol, "rtol": self.rtol}
