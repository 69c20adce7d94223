"""Plain-tuple geometry helpers preloaded into reasoning sandboxes.

Generated code works with the OBJECTS table, whose entries hold bare tuples,
so every helper here takes and returns plain Python values instead of the
dataclasses in :mod:`sceneground.geometry`. The interpreter shim ships its
own implementation of the same namespace; the two sides must agree within
1e-9 on identical inputs.
"""

from __future__ import annotations

from typing import Sequence

from . import geometry
from .geometry import Aabb, Hsl

Vec = Sequence[float]


def iou3d(center_a: Vec, size_a: Vec, center_b: Vec, size_b: Vec) -> float:
    """Intersection-over-union of two axis-aligned boxes."""
    return geometry.iou3d(Aabb(tuple(center_a), tuple(size_a)), Aabb(tuple(center_b), tuple(size_b)))


def rgb_to_hsl(rgb: Sequence[int]) -> tuple[float, float, float]:
    """RGB in [0, 255] to (hue degrees, saturation, lightness)."""
    return geometry.rgb_to_hsl(tuple(rgb)).as_tuple()


def color_distance(hsl_a: Vec, hsl_b: Vec) -> float:
    """Weighted distance between two (h, s, l) colors; hue is circular."""
    return geometry.color_distance(Hsl(*hsl_a), Hsl(*hsl_b))


def color_distance_rgb(rgb_a: Sequence[int], rgb_b: Sequence[int]) -> float:
    """Color distance straight from two RGB triples."""
    return geometry.color_distance(geometry.rgb_to_hsl(tuple(rgb_a)), geometry.rgb_to_hsl(tuple(rgb_b)))


def point_plane_distance(point: Vec, plane_point: Vec, plane_normal: Vec) -> float:
    """Unsigned distance from a point to a plane given by point + unit normal."""
    return geometry.point_plane_distance(point, plane_point, plane_normal)


def left_right_of(anchor: Vec, candidate: Vec, observer: Vec) -> str:
    """'left', 'right', or 'aligned' for candidate vs anchor seen from observer."""
    return geometry.left_right_of(anchor, candidate, observer).value


def betweenness(a: Vec, b: Vec, x: Vec) -> float:
    """Score in (0, 1] for how well x lies between a and b."""
    return geometry.betweenness(a, b, x)


def corner_score(center: Vec, size: Vec, walls: Sequence[tuple[Vec, Vec]]) -> float:
    """Sum of the two smallest distances from a box center to wall planes.

    `walls` is a list of (center, size) pairs; smaller score = more cornered.
    """
    box = Aabb(tuple(center), tuple(size))
    wall_boxes = [Aabb(tuple(c), tuple(s)) for c, s in walls]
    return geometry.corner_score(box, wall_boxes)


def default_observer(scene_center: Vec) -> tuple[float, float, float]:
    """Standing observer at the scene center, eye height 1.6 m."""
    return geometry.default_observer(scene_center)


def dist(a: Vec, b: Vec) -> float:
    """3D Euclidean distance."""
    return geometry.distance(a, b)


def dist_xy(a: Vec, b: Vec) -> float:
    """Euclidean distance in the horizontal plane."""
    return geometry.horizontal_distance(a, b)


HELPERS = {
    "iou3d": iou3d,
    "rgb_to_hsl": rgb_to_hsl,
    "color_distance": color_distance,
    "color_distance_rgb": color_distance_rgb,
    "point_plane_distance": point_plane_distance,
    "left_right_of": left_right_of,
    "betweenness": betweenness,
    "corner_score": corner_score,
    "default_observer": default_observer,
    "dist": dist,
    "dist_xy": dist_xy,
}

#: Short signature list surfaced in the system prompt so the model knows what
#: is preloaded next to OBJECTS and SCENE_CENTER.
HELP_TEXT = """\
Preloaded variables:
  OBJECTS: dict mapping object id -> {'category': str, 'center': (x, y, z), 'size': (sx, sy, sz), 'rgb': (r, g, b)}
  SCENE_CENTER: (x, y, z)
Preloaded helper functions:
  dist(a, b), dist_xy(a, b)
  iou3d(center_a, size_a, center_b, size_b)
  rgb_to_hsl(rgb), color_distance(hsl_a, hsl_b), color_distance_rgb(rgb_a, rgb_b)
  point_plane_distance(point, plane_point, plane_normal)
  left_right_of(anchor, candidate, observer) -> 'left' | 'right' | 'aligned'
  betweenness(a, b, x) -> score in (0, 1]
  corner_score(center, size, walls) with walls = [(center, size), ...]
  default_observer(scene_center) -> standing viewpoint at 1.6 m"""
