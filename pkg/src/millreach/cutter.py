"""Ball-end cutter model: geometry parameters, point classification, presets.

The cutter is a stack of solids along its local +Z axis, tip at the origin:
a hemispherical ball end (radius CR), a body cylinder (radius CR, height CH),
a holder cylinder (radius FR, height FH), and an unbounded shaft region above
z = CR + CH + FH whose radius is a policy choice (finite or infinite).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

DEFAULT_EPSILON = 1e-6
DEFAULT_SIGMA = 5.0


class CollisionClass(enum.Enum):
    """Which part of the cutter a point falls inside (NONE = no collision)."""

    NONE = "none"
    BALL = "ball"
    BODY = "body"
    HOLDER = "holder"
    SHAFT = "shaft"


@dataclass(frozen=True)
class Cutter:
    """Four-parameter ball-end cutter, dimensions in mm.

    shaft_radius bounds the shaft collision region above the holder; it may
    be math.inf to model a machine spindle of unlimited size.
    """

    cr: float
    ch: float
    fr: float
    fh: float
    shaft_radius: float = math.inf

    def __post_init__(self):
        if not (self.cr > 0 and self.fr > 0):
            raise ValueError(f"cutter radii must be positive: CR={self.cr}, FR={self.fr}")
        if self.ch < 0 or self.fh < 0:
            raise ValueError(f"cutter heights must be nonnegative: CH={self.ch}, FH={self.fh}")
        if not (self.shaft_radius >= max(self.cr, self.fr)):
            raise ValueError(f"shaft_radius {self.shaft_radius} below max(CR, FR)")

    @property
    def total_height(self) -> float:
        """Height of the shaft plane above the tip: CR + CH + FH."""
        return self.cr + self.ch + self.fh

    def with_shaft(self, shaft_radius: float) -> "Cutter":
        return replace(self, shaft_radius=shaft_radius)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cr, self.ch, self.fr, self.fh)


def collide_point(cutter: Cutter, p, eps: float = DEFAULT_EPSILON) -> CollisionClass:
    """Classify a point given in the cutter-local frame (tip at origin, axis +Z).

    The cutter volume is shrunk by eps so that points exactly on the cutter
    surface (the machined contact itself) never register as collisions.
    """
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    r2 = x * x + y * y
    top = cutter.total_height
    if z > top:
        t = cutter.shaft_radius - eps
        if r2 < t * t:
            return CollisionClass.SHAFT
    elif z >= cutter.cr + cutter.ch:
        t = cutter.fr - eps
        if r2 < t * t:
            return CollisionClass.HOLDER
    elif z >= cutter.cr:
        t = cutter.cr - eps
        if r2 < t * t:
            return CollisionClass.BODY
    elif z >= 0.0:
        t = cutter.cr - eps
        dz = z - cutter.cr
        if r2 + dz * dz < t * t:
            return CollisionClass.BALL
    return CollisionClass.NONE


@dataclass(frozen=True)
class CutterPreset:
    """Closed sampling intervals for each cutter parameter."""

    name: str
    cr_range: tuple[float, float]
    ch_range: tuple[float, float]
    fr_range: tuple[float, float]
    fh_range: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.cr_range, self.ch_range, self.fr_range, self.fh_range):
            if not (0 < lo <= hi):
                raise ValueError(f"bad preset interval [{lo}, {hi}] in {self.name}")


PRESETS = {
    "uniform": CutterPreset("uniform", (1.0, 2.0), (0.1, 10.1), (5.0, 100.0), (0.1, 10.1)),
    "short": CutterPreset("short", (1.0, 2.0), (0.1, 0.2), (80.0, 100.0), (0.1, 0.2)),
    "long": CutterPreset("long", (1.0, 2.0), (10.0, 10.1), (5.0, 5.1), (10.0, 10.1)),
    "extreme": CutterPreset("extreme", (1.0, 2.0), (20.0, 20.1), (5.0, 5.1), (20.0, 20.1)),
}


def random_cutter(preset: CutterPreset | str, seed: int, sigma: float = DEFAULT_SIGMA) -> Cutter:
    """Draw a cutter uniformly from the preset's parameter intervals.

    Deterministic per seed; parameters are drawn in CR, CH, FR, FH order.
    shaft_radius is set to FR + sigma so the detection-box prefilter of the
    accessibility engine stays exact.
    """
    if isinstance(preset, str):
        preset = PRESETS[preset]
    rng = np.random.default_rng(seed)
    cr = rng.uniform(*preset.cr_range)
    ch = rng.uniform(*preset.ch_range)
    fr = rng.uniform(*preset.fr_range)
    fh = rng.uniform(*preset.fh_range)
    return Cutter(cr=cr, ch=ch, fr=fr, fh=fh, shaft_radius=fr + sigma)


def parse_cutter_spec(text: str, sigma: float = DEFAULT_SIGMA) -> Cutter:
    """Parse the CLI form "CR,CH,FR,FH" (mm, decimal)."""
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"expected CR,CH,FR,FH, got {text!r}")
    cr, ch, fr, fh = (float(v) for v in parts)
    return Cutter(cr=cr, ch=ch, fr=fr, fh=fh, shaft_radius=fr + sigma)
