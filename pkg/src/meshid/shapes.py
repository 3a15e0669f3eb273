"""Procedural triangle meshes.

These provide a self-contained corpus for demos and tests without
shipping third party model files. Shapes are centered on the origin
with an extent of roughly one unit; run them through
:func:`meshid.stl.normalize` before rendering, same as any loaded STL.
"""

from __future__ import annotations

import math

import numpy as np

from .stl import TriangleMesh


def _mesh(triangles: list) -> TriangleMesh:
    return TriangleMesh(triangles=np.array(triangles, dtype=np.float64))


def _quad(a, b, c, d) -> list:
    return [[a, b, c], [a, c, d]]


def merge(*meshes: TriangleMesh) -> TriangleMesh:
    return TriangleMesh(triangles=np.concatenate([m.triangles for m in meshes]))


def box(sx: float = 1.0, sy: float = 1.0, sz: float = 1.0) -> TriangleMesh:
    x, y, z = sx / 2.0, sy / 2.0, sz / 2.0
    tris = []
    tris += _quad((-x, -y, -z), (-x, y, -z), (x, y, -z), (x, -y, -z))  # bottom
    tris += _quad((-x, -y, z), (x, -y, z), (x, y, z), (-x, y, z))  # top
    tris += _quad((-x, -y, -z), (x, -y, -z), (x, -y, z), (-x, -y, z))
    tris += _quad((x, -y, -z), (x, y, -z), (x, y, z), (x, -y, z))
    tris += _quad((x, y, -z), (-x, y, -z), (-x, y, z), (x, y, z))
    tris += _quad((-x, y, -z), (-x, -y, -z), (-x, -y, z), (-x, y, z))
    return _mesh(tris)


def cube() -> TriangleMesh:
    return box(1.0, 1.0, 1.0)


def _ring(n: int, radius: float, z: float) -> list:
    pts = []
    for k in range(n):
        angle = 2.0 * math.pi * k / n
        pts.append((radius * math.cos(angle), radius * math.sin(angle), z))
    return pts


def prism(sides: int, radius: float = 0.5, height: float = 1.0) -> TriangleMesh:
    bottom = _ring(sides, radius, -height / 2.0)
    top = _ring(sides, radius, height / 2.0)
    tris = []
    for k in range(sides):
        nk = (k + 1) % sides
        tris += _quad(bottom[k], bottom[nk], top[nk], top[k])
        tris.append([(0.0, 0.0, -height / 2.0), bottom[nk], bottom[k]])
        tris.append([(0.0, 0.0, height / 2.0), top[k], top[nk]])
    return _mesh(tris)


def pyramid(sides: int = 4, height: float = 0.75) -> TriangleMesh:
    # Square base corners sit exactly on half-integer coordinates so a
    # quarter turn about Z maps the mesh onto itself bit for bit; the
    # base is fanned from its center to keep that symmetry.
    if sides == 4:
        base = [(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)]
    else:
        base = [(0.5 * math.cos(2 * math.pi * k / sides), 0.5 * math.sin(2 * math.pi * k / sides)) for k in range(sides)]
    z0 = -height / 3.0
    apex = (0.0, 0.0, height * 2.0 / 3.0)
    center = (0.0, 0.0, z0)
    tris = []
    for k in range(sides):
        nk = (k + 1) % sides
        a = (base[k][0], base[k][1], z0)
        b = (base[nk][0], base[nk][1], z0)
        tris.append([a, b, apex])
        tris.append([center, b, a])
    return _mesh(tris)


def cone(segments: int = 16, radius: float = 0.5, height: float = 1.0) -> TriangleMesh:
    ring = _ring(segments, radius, -height / 2.0)
    apex = (0.0, 0.0, height / 2.0)
    center = (0.0, 0.0, -height / 2.0)
    tris = []
    for k in range(segments):
        nk = (k + 1) % segments
        tris.append([ring[k], ring[nk], apex])
        tris.append([center, ring[nk], ring[k]])
    return _mesh(tris)


def frustum(segments: int, r_bottom: float, r_top: float, height: float = 1.0) -> TriangleMesh:
    bottom = _ring(segments, r_bottom, -height / 2.0)
    top = _ring(segments, r_top, height / 2.0)
    tris = []
    for k in range(segments):
        nk = (k + 1) % segments
        tris += _quad(bottom[k], bottom[nk], top[nk], top[k])
        tris.append([(0.0, 0.0, -height / 2.0), bottom[nk], bottom[k]])
        tris.append([(0.0, 0.0, height / 2.0), top[k], top[nk]])
    return _mesh(tris)


def sphere(lat_segments: int = 12, lon_segments: int = 16, radius: float = 0.5) -> TriangleMesh:
    def point(phi, theta):
        return (
            radius * math.sin(phi) * math.cos(theta),
            radius * math.sin(phi) * math.sin(theta),
            radius * math.cos(phi),
        )

    tris = []
    for i in range(lat_segments):
        phi0 = math.pi * i / lat_segments
        phi1 = math.pi * (i + 1) / lat_segments
        for j in range(lon_segments):
            theta0 = 2.0 * math.pi * j / lon_segments
            theta1 = 2.0 * math.pi * (j + 1) / lon_segments
            a, b = point(phi0, theta0), point(phi0, theta1)
            c, d = point(phi1, theta1), point(phi1, theta0)
            if i == 0:
                tris.append([a, c, d])  # a and b coincide at the north pole
            elif i == lat_segments - 1:
                tris.append([a, b, c])  # c and d coincide at the south pole
            else:
                tris += _quad(a, b, c, d)
    return _mesh(tris)


def ellipsoid(ax: float, ay: float, az: float, lat_segments: int = 12, lon_segments: int = 16) -> TriangleMesh:
    base = sphere(lat_segments, lon_segments, radius=1.0)
    scaled = base.triangles * np.array([ax, ay, az])
    return TriangleMesh(triangles=scaled)


def torus(major: float = 0.32, minor: float = 0.14, seg_u: int = 16, seg_v: int = 10) -> TriangleMesh:
    tris = []
    for i in range(seg_u):
        u0 = 2.0 * math.pi * i / seg_u
        u1 = 2.0 * math.pi * (i + 1) / seg_u
        for j in range(seg_v):
            v0 = 2.0 * math.pi * j / seg_v
            v1 = 2.0 * math.pi * (j + 1) / seg_v

            def point(u, v):
                r = major + minor * math.cos(v)
                return (r * math.cos(u), r * math.sin(u), minor * math.sin(v))

            a, b = point(u0, v0), point(u1, v0)
            c, d = point(u1, v1), point(u0, v1)
            tris += _quad(a, b, c, d)
    return _mesh(tris)


def bracket() -> TriangleMesh:
    """L-shaped bracket made of two overlapping blocks."""
    foot = box(1.0, 0.4, 0.4)
    foot_shifted = TriangleMesh(triangles=foot.triangles + np.array([0.0, 0.0, -0.3]))
    wall = box(0.4, 0.4, 1.0)
    wall_shifted = TriangleMesh(triangles=wall.triangles + np.array([-0.3, 0.0, 0.0]))
    return merge(foot_shifted, wall_shifted)


def tee() -> TriangleMesh:
    stem = box(0.35, 0.35, 1.0)
    bar = TriangleMesh(triangles=box(1.0, 0.35, 0.35).triangles + np.array([0.0, 0.0, 0.4]))
    return merge(stem, bar)


def cross() -> TriangleMesh:
    return merge(box(1.0, 0.3, 0.3), box(0.3, 1.0, 0.3), box(0.3, 0.3, 1.0))


_VARIANTS = [
    lambda: box(1.0, 0.62, 0.38),
    lambda: prism(3),
    lambda: prism(5),
    lambda: prism(6),
    lambda: prism(8),
    lambda: ellipsoid(0.5, 0.34, 0.22),
    lambda: ellipsoid(0.5, 0.5, 0.18),
    lambda: cone(3),
    lambda: cone(6),
    lambda: frustum(16, 0.5, 0.25),
    lambda: frustum(16, 0.5, 0.08),
    lambda: torus(0.36, 0.09),
    lambda: torus(0.28, 0.19),
    lambda: box(1.0, 1.0, 0.12),
    lambda: box(1.0, 0.12, 0.12),
    lambda: pyramid(4),
    lambda: pyramid(6),
    lambda: sphere(5, 7),
    lambda: tee(),
    lambda: cross(),
]


def variant(index: int) -> TriangleMesh:
    """One of twenty parametric shape variations, cycling past twenty."""
    return _VARIANTS[index % len(_VARIANTS)]()


def demo_corpus(count: int = 25) -> dict[str, TriangleMesh]:
    """Named shapes for a synthetic corpus, in stable lexicographic order.

    The first five are the geometrically distinct base shapes; variants
    follow with zero padded names so directory listings sort the same
    way everywhere.
    """
    names = ["bracket", "cone", "cube", "sphere", "torus"]
    builders = [bracket, cone, cube, sphere, torus]
    corpus: dict[str, TriangleMesh] = {}
    for name, build in zip(names[:count], builders):
        corpus[name] = build()
    for i in range(max(0, count - len(names))):
        corpus[f"variant_{i + 1:02d}"] = variant(i)
    return corpus
