"""Value types shared by every module: points, poses and the action space."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

FORWARD_STEP = 0.25  # meters
TURN_STEP = 15.0  # degrees


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def distance_to(self, other: "Point2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def bearing_to(self, other: "Point2D") -> float:
        """Bearing in degrees [0, 360) from this point to other"""
        return normalize_heading(math.degrees(math.atan2(other.y - self.y, other.x - self.x)))


def normalize_heading(degrees: float) -> float:
    value = math.fmod(degrees, 360.0)
    if value < 0:
        value += 360.0
    # fmod(-1e-17) + 360 rounds to 360.0
    if value >= 360.0:
        value = 0.0
    return value


def angle_diff(target: float, source: float) -> float:
    """Signed smallest rotation from source to target, in (-180, 180]"""
    d = normalize_heading(target - source)
    return d - 360.0 if d > 180.0 else d


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def point(self) -> Point2D:
        return Point2D(self.x, self.y)

    def offset(self, rel_heading: float, distance: float) -> Point2D:
        """Point at distance along heading + rel_heading"""
        a = math.radians(self.heading + rel_heading)
        return Point2D(self.x + distance * math.cos(a), self.y + distance * math.sin(a))

    def to_dict(self):
        return {"x": self.x, "y": self.y, "heading": self.heading}


class Action(Enum):
    FORWARD = "FWD"
    TURN_LEFT = "TL"
    TURN_RIGHT = "TR"
    STOP = "STOP"

    @property
    def mnemonic(self) -> str:
        return self.value

    @classmethod
    def from_mnemonic(cls, text: str) -> "Action":
        for action in cls:
            if action.value == text:
                return action
        raise ValueError(f"Unknown action mnemonic: {text!r}")
