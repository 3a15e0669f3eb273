"""Deterministic software renderer for camera-sphere sweeps.

A model is imaged from every latitude and longitude on a fixed-radius
sphere, stepped by a configurable number of degrees. Rather than moving
the camera, each pose rotates the mesh into a canonical frame where the
camera sits at (radius, 0, 0) looking down -X with +Z up. The two lamps
are fixed in that canonical frame, so a pose change is exactly a rigid
motion of the mesh and symmetric meshes produce bit-identical images at
symmetric poses.

Rasterization is single threaded and unvectorized across triangles on
purpose: perspective projection, a top-left fill rule on pixel centers,
and a z-buffer keyed on interpolated inverse depth. No antialiasing.
Identical scene and config always give identical bytes.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadStep, DataError, DegenerateCamera, IoFailure
from .geometry import cosd, rot_y, rot_z, sind
from .imops import resize, save_png  # noqa: F401  (resize re-exported for callers)
from .stl import TriangleMesh, compute_normals

_STEP_TOL = 1e-9

LAMP_BRIGHT = (4.0, 4.0, 4.0)
LAMP_DIM = (-4.5, -4.5, -4.5)


@dataclass(frozen=True)
class CameraPose:
    lat: float
    lon: float
    radius: float = 3.0


@dataclass(frozen=True)
class ViewTransform:
    """Camera placement for a pose.

    ``position`` is the camera location in model coordinates.
    ``rotation`` maps model coordinates into the canonical render frame.
    """

    position: np.ndarray
    rotation: np.ndarray


@dataclass
class Scene:
    mesh: TriangleMesh
    camera: CameraPose
    ambient: float = 0.1
    lamp_intensity: float = 0.9
    lamps: tuple = (LAMP_BRIGHT, LAMP_DIM)


@dataclass(frozen=True)
class RenderConfig:
    resolution: int = 540
    degree_step: float = 30.0
    fov_y: float = 30.0
    background: tuple[int, int, int] = (128, 128, 128)
    camera_radius: float = 3.0

    def __post_init__(self) -> None:
        if self.resolution < 16:
            raise DataError(f"resolution must be at least 16, got {self.resolution}")
        _check_step(self.degree_step)
        if self.camera_radius <= 0:
            raise DegenerateCamera("camera radius must be positive")


def _check_step(step: float) -> None:
    if step <= 0:
        raise BadStep(f"degree step must be positive, got {step}")
    turns = round(360.0 / step)
    if turns < 1 or abs(turns * step - 360.0) > _STEP_TOL:
        raise BadStep(f"degree step must divide 360, got {step}")


def camera_positions(step: float, radius: float = 3.0) -> list[CameraPose]:
    """Every latitude/longitude pose for a degree step, lat-major order.

    Latitude runs from -90 to +90 inclusive and longitude from 0 up to
    but not including 360, so a step of 30 yields 7 * 12 = 84 poses.
    """
    _check_step(step)
    if radius <= 0:
        raise DegenerateCamera("camera radius must be positive")
    poses = []
    k = 0
    while True:
        lat = -90.0 + k * step
        if lat > 90.0 + _STEP_TOL:
            break
        poses.extend(CameraPose(lat=lat, lon=j * step, radius=radius) for j in range(round(360.0 / step)))
        k += 1
    return poses


def pose_to_view(pose: CameraPose) -> ViewTransform:
    """Rotation and camera position realizing a pose.

    The up reference is +Z. At the poles that reference is parallel to
    the viewing axis, so +X takes its place; longitude is ignored there
    and every pole pose yields the same view.
    """
    if pose.radius <= 0:
        raise DegenerateCamera("camera radius must be positive")
    lat, lon = float(pose.lat), float(pose.lon)
    if lat == 90.0:
        rotation = np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])
    elif lat == -90.0:
        rotation = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    else:
        rotation = rot_y(lat) @ rot_z(-lon)
    position = pose.radius * np.array([cosd(lat) * cosd(lon), cosd(lat) * sind(lon), sind(lat)])
    return ViewTransform(position=position, rotation=rotation)


def render(scene: Scene, config: RenderConfig) -> np.ndarray:
    """Rasterize one view into an (H, W, 3) uint8 image."""
    mesh = scene.mesh
    pose = scene.camera
    if mesh.triangle_count and pose.radius <= float(np.linalg.norm(mesh.vertices, axis=1).max()):
        raise DegenerateCamera(
            f"camera radius {pose.radius} is inside the model's bounding sphere"
        )
    view = pose_to_view(pose)
    res = config.resolution

    gray = np.zeros((res, res), dtype=np.uint8)
    inv_depth = np.zeros((res, res), dtype=np.float64)

    if mesh.triangle_count:
        rotated = mesh.triangles @ view.rotation.T
        oriented = compute_normals(TriangleMesh(triangles=rotated))
        shades = _facet_shades(oriented.normals, scene)
        values = np.clip(np.floor(shades * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8)

        focal = (res / 2.0) / math.tan(math.radians(config.fov_y) / 2.0)
        depths = pose.radius - rotated[:, :, 0]
        px = res / 2.0 + focal * rotated[:, :, 1] / depths
        py = res / 2.0 - focal * rotated[:, :, 2] / depths

        for t in range(len(rotated)):
            if oriented.degenerate[t] or depths[t].min() <= 1e-9:
                continue
            _raster_triangle(gray, inv_depth, px[t], py[t], 1.0 / depths[t], values[t], res)

    covered = inv_depth > 0.0
    out = np.empty((res, res, 3), dtype=np.uint8)
    for channel, back in enumerate(config.background):
        out[:, :, channel] = np.where(covered, gray, np.uint8(back))
    return out


def _facet_shades(normals: np.ndarray, scene: Scene) -> np.ndarray:
    shade = np.full(len(normals), scene.ambient, dtype=np.float64)
    for lamp in scene.lamps:
        direction = np.asarray(lamp, dtype=np.float64)
        direction = direction / np.linalg.norm(direction)
        shade += scene.lamp_intensity * np.maximum(0.0, normals @ direction)
    return np.clip(shade, 0.0, 1.0)


def _raster_triangle(gray, inv_depth, tx, ty, invd, value, res) -> None:
    ax, ay = tx[0], ty[0]
    bx, by = tx[1], ty[1]
    cx, cy = tx[2], ty[2]
    area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area2 == 0.0:
        return
    if area2 < 0.0:
        bx, by, cx, cy = cx, cy, bx, by
        invd = invd[[0, 2, 1]]
        area2 = -area2

    x_lo = max(0, math.ceil(min(ax, bx, cx) - 0.5))
    x_hi = min(res - 1, math.floor(max(ax, bx, cx) - 0.5))
    y_lo = max(0, math.ceil(min(ay, by, cy) - 0.5))
    y_hi = min(res - 1, math.floor(max(ay, by, cy) - 0.5))
    if x_lo > x_hi or y_lo > y_hi:
        return

    xs = np.arange(x_lo, x_hi + 1) + 0.5
    ys = (np.arange(y_lo, y_hi + 1) + 0.5)[:, None]

    def edge(px0, py0, px1, py1):
        values = (px1 - px0) * (ys - py0) - (py1 - py0) * (xs - px0)
        dy = py1 - py0
        dx = px1 - px0
        # Boundary pixels count as inside only on top and left edges,
        # so triangles sharing an edge never both claim a pixel.
        topleft = dy < 0.0 or (dy == 0.0 and dx > 0.0)
        return (values > 0.0) | ((values == 0.0) & topleft), values

    in_ab, e_ab = edge(ax, ay, bx, by)
    in_bc, e_bc = edge(bx, by, cx, cy)
    in_ca, e_ca = edge(cx, cy, ax, ay)
    inside = in_ab & in_bc & in_ca
    if not inside.any():
        return

    # Barycentric weights come from the edge functions opposite each
    # vertex; interpolating inverse depth keeps plane depth exact.
    w = (e_bc * invd[0] + e_ca * invd[1] + e_ab * invd[2]) / area2
    window = inv_depth[y_lo : y_hi + 1, x_lo : x_hi + 1]
    winner = inside & (w > window)
    window[winner] = w[winner]
    gray[y_lo : y_hi + 1, x_lo : x_hi + 1][winner] = value


def render_views(
    mesh: TriangleMesh,
    config: RenderConfig,
    out_dir: str | Path,
    model_id: str = "",
) -> dict:
    """Render every pose of the camera sphere into ``out_dir``.

    Files are named ``{lat}_{lon}.png``. Existing files of matching
    names are overwritten. Returns the render manifest, which is also
    written to ``render_manifest.json`` alongside the images.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    started = time.perf_counter()
    poses = camera_positions(config.degree_step, config.camera_radius)
    files = []
    for pose in poses:
        image = render(Scene(mesh=mesh, camera=pose), config)
        name = f"{_fmt_angle(pose.lat)}_{_fmt_angle(pose.lon)}.png"
        save_png(out_dir / name, image)
        files.append(name)
    manifest = {
        "id": model_id,
        "degree_step": config.degree_step,
        "resolution": config.resolution,
        "poses": [[pose.lat, pose.lon] for pose in poses],
        "files": files,
        "render_seconds": time.perf_counter() - started,
    }
    try:
        (out_dir / "render_manifest.json").write_text(json.dumps(manifest, indent=2))
    except OSError as exc:
        raise IoFailure(f"cannot write render manifest in {out_dir}: {exc}") from exc
    return manifest


def _fmt_angle(value: float) -> str:
    return f"{value:g}"
