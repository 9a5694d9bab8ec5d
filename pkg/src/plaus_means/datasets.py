"""Bundled example data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Estimated treatment effects and their standard errors from eight parallel
# school coaching experiments; the classic meta-analysis benchmark.
_SAT_COACHING_ROWS = (
    (1, 28.39, 14.9),
    (2, 7.94, 10.2),
    (3, -2.75, 16.3),
    (4, 6.82, 11.0),
    (5, -0.64, 9.4),
    (6, 0.63, 11.4),
    (7, 18.01, 10.4),
    (8, 12.16, 17.6),
)


@dataclass(frozen=True)
class EffectsDataset:
    """Per-study effect estimates ``y`` with known standard errors ``s``."""

    y: np.ndarray
    s: np.ndarray
    label: str

    @property
    def x(self) -> np.ndarray:
        """Standardized effects ``y / s``, on the unit-variance scale."""
        return self.y / self.s


def sat_coaching() -> EffectsDataset:
    """The eight-school SAT coaching experiments."""
    y = np.array([row[1] for row in _SAT_COACHING_ROWS])
    s = np.array([row[2] for row in _SAT_COACHING_ROWS])
    y.setflags(write=False)
    s.setflags(write=False)
    return EffectsDataset(y=y, s=s, label="sat_coaching")


def sat_coaching_csv() -> str:
    """The bundled table rendered as a canonical CSV document."""
    lines = ["school,y,s"]
    lines += [f"{i},{y},{s}" for i, y, s in _SAT_COACHING_ROWS]
    return "\n".join(lines) + "\n"
