"""Planar pose algebra and the circular-trajectory fitness.

Poses live in SE(2): x, y in body-length units, yaw in radians wrapped
to (-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Reduce an angle modulo 2*pi into the half-open interval (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    r = math.fmod(a, TWO_PI)
    if r > math.pi:
        r -= TWO_PI
    elif r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class Pose2:
    """A planar pose; yaw is wrapped on construction."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


IDENTITY = Pose2()


def se2_compose(a: Pose2, b: Pose2) -> Pose2:
    """Apply displacement b in the frame of pose a."""
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.yaw + b.yaw,
    )


def se2_inverse(p: Pose2) -> Pose2:
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    return Pose2(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.yaw)


def se2_relative(a: Pose2, b: Pose2) -> Pose2:
    """Displacement that takes pose a to pose b, expressed in a's frame."""
    return se2_compose(se2_inverse(a), b)


def circular_fitness(d: Pose2) -> float:
    """Negative angular error between final heading and an ideal circular arc.

    A circular arc starting at the origin with heading +x ends at (x, y)
    with heading 2*atan2(y, x).  The degenerate zero-displacement case
    scores -|yaw| so standing still without rotating is not penalized.
    """
    if d.x == 0.0 and d.y == 0.0:
        return -abs(wrap_angle(d.yaw))
    return -abs(wrap_angle(d.yaw - 2.0 * math.atan2(d.y, d.x)))
