"""Geometry and color helpers preloaded into the execution namespace.

Standalone on purpose: the shim ships no dependencies, so these are plain
reimplementations of the host-side helper namespace. The host's test suite
holds the two sides to agreement within 1e-9, which is why each formula here
keeps the same operation order as its host counterpart.
"""

import math

OBSERVER_HEIGHT = 1.6


def _vec3(value, name):
    if len(value) != 3:
        raise ValueError(f"{name} must have 3 components, got {len(value)}")
    return (float(value[0]), float(value[1]), float(value[2]))


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _norm(a):
    return math.sqrt(_dot(a, a))


def _corners(center, size):
    center = _vec3(center, "center")
    size = _vec3(size, "size")
    if any(s <= 0 for s in size):
        raise ValueError(f"box size must be positive, got {size}")
    lo = tuple(c - s / 2 for c, s in zip(center, size))
    hi = tuple(c + s / 2 for c, s in zip(center, size))
    return lo, hi


def dist(a, b):
    """3D Euclidean distance."""
    return _norm(_sub(_vec3(a, "a"), _vec3(b, "b")))


def dist_xy(a, b):
    """Euclidean distance in the horizontal plane."""
    pa, pb = _vec3(a, "a"), _vec3(b, "b")
    return math.hypot(pa[0] - pb[0], pa[1] - pb[1])


def iou3d(center_a, size_a, center_b, size_b):
    """Intersection-over-union of two axis-aligned boxes."""
    a_lo, a_hi = _corners(center_a, size_a)
    b_lo, b_hi = _corners(center_b, size_b)
    inter = 1.0
    for axis in range(3):
        overlap = min(a_hi[axis], b_hi[axis]) - max(a_lo[axis], b_lo[axis])
        if overlap <= 0:
            return 0.0
        inter *= overlap
    vol_a = (a_hi[0] - a_lo[0]) * (a_hi[1] - a_lo[1]) * (a_hi[2] - a_lo[2])
    vol_b = (b_hi[0] - b_lo[0]) * (b_hi[1] - b_lo[1]) * (b_hi[2] - b_lo[2])
    union = vol_a + vol_b - inter
    return inter / union


def rgb_to_hsl(rgb):
    """RGB in [0, 255] to (hue degrees in [0, 360), saturation, lightness)."""
    if len(rgb) != 3:
        raise ValueError(f"rgb must have 3 components, got {len(rgb)}")
    for comp in rgb:
        if not (0 <= comp <= 255):
            raise ValueError(f"rgb component {comp} outside [0, 255]")
    r, g, b = (c / 255.0 for c in rgb)
    mx, mn = max(r, g, b), min(r, g, b)
    delta = mx - mn
    lightness = (mx + mn) / 2.0
    if delta == 0:
        return (0.0, 0.0, lightness)
    saturation = delta / (1.0 - abs(2.0 * lightness - 1.0))
    if mx == r:
        hue = 60.0 * (((g - b) / delta) % 6.0)
    elif mx == g:
        hue = 60.0 * (((b - r) / delta) + 2.0)
    else:
        hue = 60.0 * (((r - g) / delta) + 4.0)
    return (hue % 360.0, min(saturation, 1.0), lightness)


def color_distance(hsl_a, hsl_b):
    """Weighted HSL distance; hue is circular and dominates."""
    dh = abs(hsl_a[0] - hsl_b[0])
    dh = min(dh, 360.0 - dh)
    return 1.0 * dh / 180.0 + 0.5 * abs(hsl_a[1] - hsl_b[1]) + 0.5 * abs(hsl_a[2] - hsl_b[2])


def color_distance_rgb(rgb_a, rgb_b):
    """Color distance straight from two RGB triples."""
    return color_distance(rgb_to_hsl(rgb_a), rgb_to_hsl(rgb_b))


def point_plane_distance(point, plane_point, plane_normal):
    """Unsigned distance from a point to the plane (plane_point, unit normal)."""
    p = _vec3(point, "point")
    q = _vec3(plane_point, "plane_point")
    n = _vec3(plane_normal, "plane_normal")
    if abs(_norm(n) - 1.0) > 1e-6:
        raise ValueError(f"plane normal must be unit length, |n|={_norm(n)}")
    return abs(_dot(_sub(p, q), n))


def left_right_of(anchor, candidate, observer, tolerance=1e-9):
    """'left', 'right', or 'aligned' for candidate vs anchor seen from observer."""
    a = _vec3(anchor, "anchor")
    c = _vec3(candidate, "candidate")
    o = _vec3(observer, "observer")
    ax, ay = a[0] - o[0], a[1] - o[1]
    cx, cy = c[0] - o[0], c[1] - o[1]
    arm_a = math.hypot(ax, ay)
    if arm_a == 0.0:
        raise ValueError("anchor coincides with observer in the horizontal plane")
    arm_c = math.hypot(cx, cy)
    if arm_c == 0.0:
        return "aligned"
    value = (ax * cy - ay * cx) / (arm_a * arm_c)
    if value > tolerance:
        return "left"
    if value < -tolerance:
        return "right"
    return "aligned"


def betweenness(a, b, x):
    """Score in (0, 1] for how well x lies between a and b."""
    pa, pb, px = _vec3(a, "a"), _vec3(b, "b"), _vec3(x, "x")
    seg = _sub(pb, pa)
    length = _norm(seg)
    if length == 0.0:
        raise ValueError("betweenness endpoints coincide")
    t = _dot(_sub(px, pa), seg) / (length * length)
    closest = (pa[0] + t * seg[0], pa[1] + t * seg[1], pa[2] + t * seg[2])
    perp = _norm(_sub(px, closest))
    overshoot = max(0.0, -t, t - 1.0) * length
    return math.exp(-(perp + overshoot) / (length / 2.0))


def corner_score(center, size, walls):
    """Sum of the two smallest distances from the box center to wall planes.

    `walls` is a list of (center, size) pairs; each wall's face plane passes
    through its center with the normal along its thinnest extent.
    """
    if len(walls) < 2:
        raise ValueError(f"corner_score needs at least 2 walls, got {len(walls)}")
    box_center = _vec3(center, "center")
    _corners(center, size)  # validates the box
    distances = []
    for wall_center, wall_size in walls:
        w_center = _vec3(wall_center, "wall center")
        w_size = _vec3(wall_size, "wall size")
        axis = min(range(3), key=lambda i: w_size[i])
        normal = tuple(1.0 if i == axis else 0.0 for i in range(3))
        distances.append(point_plane_distance(box_center, w_center, normal))
    distances.sort()
    return distances[0] + distances[1]


def default_observer(scene_center, height=OBSERVER_HEIGHT):
    """Standing observer at the scene center."""
    c = _vec3(scene_center, "scene_center")
    return (c[0], c[1], height)


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
