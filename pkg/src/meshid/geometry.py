"""Small angle and rotation helpers used by the renderer and augmentation.

Trig is evaluated in degrees and is exact at multiples of 90 so that
poses such as lat = 90 or a quarter-turn image rotation produce exact
coordinates instead of values a few ulp off. That exactness is what lets
renders of a symmetric mesh at symmetric poses match bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

_EXACT = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}


def cosd(angle: float) -> float:
    """Cosine of an angle in degrees, exact at multiples of 90."""
    key = float(angle) % 360.0
    if key in _EXACT:
        return _EXACT[key][0]
    return math.cos(math.radians(angle))


def sind(angle: float) -> float:
    """Sine of an angle in degrees, exact at multiples of 90."""
    key = float(angle) % 360.0
    if key in _EXACT:
        return _EXACT[key][1]
    return math.sin(math.radians(angle))


def rot_y(angle: float) -> np.ndarray:
    """Rotation by ``angle`` degrees about the +Y axis."""
    c, s = cosd(angle), sind(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    """Rotation by ``angle`` degrees about the +Z axis."""
    c, s = cosd(angle), sind(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
