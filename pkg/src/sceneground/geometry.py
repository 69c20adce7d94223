"""Deterministic 3D geometry and color primitives.

Everything here is a pure function over plain floats, so results are
reproducible across processes. The up axis is +z and all view-dependent
relations are resolved after projecting onto the horizontal (x, y) plane;
benchmark scenes are gravity-aligned, so this loses nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import (
    DegenerateViewError,
    GeometryDomainError,
    InsufficientContextError,
)

Vec3 = tuple[float, float, float]

#: Default eye height (meters) for the synthetic observer used when an
#: utterance is view-dependent but no camera pose is available.
OBSERVER_HEIGHT = 1.6


def _vec3(value: Sequence[float], name: str) -> Vec3:
    if len(value) != 3:
        raise GeometryDomainError(f"{name} must have 3 components, got {len(value)}")
    return (float(value[0]), float(value[1]), float(value[2]))


def _sub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _dot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _norm(a: Vec3) -> float:
    return math.sqrt(_dot(a, a))


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two 3D points."""
    return _norm(_sub(_vec3(a, "a"), _vec3(b, "b")))


def horizontal_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two points projected onto the x-y plane."""
    pa, pb = _vec3(a, "a"), _vec3(b, "b")
    return math.hypot(pa[0] - pb[0], pa[1] - pb[1])


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by its center and full extents (meters)."""

    center: Vec3
    size: Vec3

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        object.__setattr__(self, "size", _vec3(self.size, "size"))
        if any(s <= 0 for s in self.size):
            raise GeometryDomainError(f"box size must be positive, got {self.size}")

    @property
    def min_corner(self) -> Vec3:
        return tuple(c - s / 2 for c, s in zip(self.center, self.size))  # type: ignore[return-value]

    @property
    def max_corner(self) -> Vec3:
        return tuple(c + s / 2 for c, s in zip(self.center, self.size))  # type: ignore[return-value]

    def volume(self) -> float:
        # Derived from the corners rather than `size` so that volume and the
        # overlap arithmetic in iou3d use the same floating-point route.
        lo, hi = self.min_corner, self.max_corner
        return (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2])


def iou3d(a: Aabb, b: Aabb) -> float:
    """Intersection-over-union of two axis-aligned boxes, in [0, 1].

    Returns exactly 0.0 for disjoint boxes and exactly 1.0 when the boxes
    coincide.
    """
    a_lo, a_hi = a.min_corner, a.max_corner
    b_lo, b_hi = b.min_corner, b.max_corner
    inter = 1.0
    for axis in range(3):
        overlap = min(a_hi[axis], b_hi[axis]) - max(a_lo[axis], b_lo[axis])
        if overlap <= 0:
            return 0.0
        inter *= overlap
    union = a.volume() + b.volume() - inter
    return inter / union


@dataclass(frozen=True)
class Hsl:
    """Color in HSL space: hue in degrees [0, 360), saturation/lightness in [0, 1]."""

    h: float
    s: float
    l: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.h < 360.0):
            raise GeometryDomainError(f"hue must be in [0, 360), got {self.h}")
        if not (0.0 <= self.s <= 1.0):
            raise GeometryDomainError(f"saturation must be in [0, 1], got {self.s}")
        if not (0.0 <= self.l <= 1.0):
            raise GeometryDomainError(f"lightness must be in [0, 1], got {self.l}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.h, self.s, self.l)


def rgb_to_hsl(rgb: Sequence[int]) -> Hsl:
    """Convert an 8-bit RGB triple to HSL."""
    if len(rgb) != 3:
        raise GeometryDomainError(f"rgb must have 3 components, got {len(rgb)}")
    for comp in rgb:
        if not (0 <= comp <= 255):
            raise GeometryDomainError(f"rgb component {comp} outside [0, 255]")
    r, g, b = (c / 255.0 for c in rgb)
    mx, mn = max(r, g, b), min(r, g, b)
    delta = mx - mn
    lightness = (mx + mn) / 2.0
    if delta == 0:
        return Hsl(0.0, 0.0, lightness)
    saturation = delta / (1.0 - abs(2.0 * lightness - 1.0))
    if mx == r:
        hue = 60.0 * (((g - b) / delta) % 6.0)
    elif mx == g:
        hue = 60.0 * (((b - r) / delta) + 2.0)
    else:
        hue = 60.0 * (((r - g) / delta) + 4.0)
    return Hsl(hue % 360.0, min(saturation, 1.0), lightness)


def hsl_to_rgb(hsl: Hsl) -> tuple[int, int, int]:
    """Inverse of :func:`rgb_to_hsl`, rounding back to 8-bit channels."""
    c = (1.0 - abs(2.0 * hsl.l - 1.0)) * hsl.s
    hp = hsl.h / 60.0
    x = c * (1.0 - abs(hp % 2.0 - 1.0))
    sector = int(hp) % 6
    r1, g1, b1 = (
        (c, x, 0.0),
        (x, c, 0.0),
        (0.0, c, x),
        (0.0, x, c),
        (x, 0.0, c),
        (c, 0.0, x),
    )[sector]
    m = hsl.l - c / 2.0
    return tuple(min(255, max(0, round((v + m) * 255.0))) for v in (r1, g1, b1))  # type: ignore[return-value]


def color_distance(
    a: Hsl,
    b: Hsl,
    *,
    hue_weight: float = 1.0,
    saturation_weight: float = 0.5,
    lightness_weight: float = 0.5,
) -> float:
    """Weighted HSL distance with circular hue (|dh| folded into [0, 180]).

    Hue dominates by default because it drives human color naming; the
    weights are parameters, not constants.
    """
    dh = abs(a.h - b.h)
    dh = min(dh, 360.0 - dh)
    return (
        hue_weight * dh / 180.0
        + saturation_weight * abs(a.s - b.s)
        + lightness_weight * abs(a.l - b.l)
    )


def point_plane_distance(
    point: Sequence[float],
    plane_point: Sequence[float],
    plane_normal: Sequence[float],
) -> float:
    """Unsigned distance from a point to the plane (plane_point, unit normal)."""
    p = _vec3(point, "point")
    q = _vec3(plane_point, "plane_point")
    n = _vec3(plane_normal, "plane_normal")
    if abs(_norm(n) - 1.0) > 1e-6:
        raise GeometryDomainError(f"plane normal must be unit length, |n|={_norm(n)}")
    return abs(_dot(_sub(p, q), n))


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"
    ALIGNED = "aligned"


def left_right_of(
    anchor: Sequence[float],
    candidate: Sequence[float],
    observer: Sequence[float],
    *,
    tolerance: float = 1e-9,
) -> Side:
    """Whether `candidate` lies left or right of `anchor` as seen from `observer`.

    Projects onto the horizontal plane and takes the sign of the z component
    of cross(anchor - observer, candidate - observer): positive means left.
    The sign test is normalized by the arm lengths so `tolerance` is
    scale-free.
    """
    a = _vec3(anchor, "anchor")
    c = _vec3(candidate, "candidate")
    o = _vec3(observer, "observer")
    ax, ay = a[0] - o[0], a[1] - o[1]
    cx, cy = c[0] - o[0], c[1] - o[1]
    arm_a = math.hypot(ax, ay)
    if arm_a == 0.0:
        raise DegenerateViewError("anchor coincides with observer in the horizontal plane")
    arm_c = math.hypot(cx, cy)
    if arm_c == 0.0:
        return Side.ALIGNED
    value = (ax * cy - ay * cx) / (arm_a * arm_c)
    if value > tolerance:
        return Side.LEFT
    if value < -tolerance:
        return Side.RIGHT
    return Side.ALIGNED


def betweenness(a: Sequence[float], b: Sequence[float], x: Sequence[float]) -> float:
    """Score in (0, 1] for how well `x` lies between `a` and `b`.

    1.0 when x sits on the segment midway (zero perpendicular offset);
    decays exponentially with the perpendicular offset and with how far the
    projection falls outside the segment, both measured against half the
    segment length. Symmetric in (a, b).
    """
    pa, pb, px = _vec3(a, "a"), _vec3(b, "b"), _vec3(x, "x")
    seg = _sub(pb, pa)
    length = _norm(seg)
    if length == 0.0:
        raise GeometryDomainError("betweenness endpoints coincide")
    t = _dot(_sub(px, pa), seg) / (length * length)
    closest = (pa[0] + t * seg[0], pa[1] + t * seg[1], pa[2] + t * seg[2])
    perp = _norm(_sub(px, closest))
    overshoot = max(0.0, -t, t - 1.0) * length
    return math.exp(-(perp + overshoot) / (length / 2.0))


def wall_plane(wall: Aabb) -> tuple[Vec3, Vec3]:
    """Dominant face plane of a wall-like box: through its center, normal
    along the thinnest extent."""
    axis = min(range(3), key=lambda i: wall.size[i])
    normal = tuple(1.0 if i == axis else 0.0 for i in range(3))
    return wall.center, normal  # type: ignore[return-value]


def corner_score(obj: Aabb, walls: Sequence[Aabb]) -> float:
    """Sum of the two smallest center-to-wall-plane distances.

    Smaller means more "in the corner". Requires at least two walls.
    """
    if len(walls) < 2:
        raise InsufficientContextError(
            f"corner_score needs at least 2 walls, got {len(walls)}"
        )
    distances = sorted(
        point_plane_distance(obj.center, *wall_plane(wall)) for wall in walls
    )
    return distances[0] + distances[1]


def default_observer(scene_center: Sequence[float], height: float = OBSERVER_HEIGHT) -> Vec3:
    """Synthetic observer for view-dependent relations: scene center at
    standing height, facing whichever anchor is passed to the relation."""
    c = _vec3(scene_center, "scene_center")
    return (c[0], c[1], height)
