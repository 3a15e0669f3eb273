"""STL reading, writing and corpus curation.

Both STL flavours are supported. A binary file is an 80 byte header, a
little-endian uint32 facet count, then one 50 byte record per facet
(normal, three vertices as float32 triples, uint16 attribute). An ASCII
file follows the ``solid / facet normal / outer loop / vertex`` grammar.

Format detection: a file is binary when its length equals
``84 + 50 * count`` for the count stored at offset 80, otherwise it is
parsed as ASCII when its first token is ``solid``. Files that satisfy
neither rule are rejected as truncated. Binary wins ambiguous cases, so
a binary file whose header happens to start with "solid" still parses
as binary.

Meshes are kept as float64 arrays of shape (T, 3, 3). Per-facet normals
from the file are retained only when every one of them has unit length
within 1e-5; otherwise they are dropped and can be recomputed from the
winding with :func:`compute_normals`.
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateExtent,
    EmptyMesh,
    IoFailure,
    MalformedAscii,
    NoModels,
    NonFiniteVertex,
    StlError,
    Truncated,
)

log = logging.getLogger(__name__)

_HEADER_LEN = 80
_COUNT_LEN = 4
_RECORD_LEN = 50
_FACET_DTYPE = np.dtype([("vectors", "<f4", (4, 3)), ("attr", "<u2")])

_NORMAL_TOL = 1e-5


@dataclass
class TriangleMesh:
    """Triangle soup with optional per-facet unit normals.

    ``triangles`` has shape (T, 3, 3): facet, corner, xyz. ``normals``
    is (T, 3) or None. ``degenerate`` marks facets with zero area and is
    filled in by :func:`compute_normals`.
    """

    triangles: np.ndarray
    normals: np.ndarray | None = None
    degenerate: np.ndarray | None = None

    def __post_init__(self) -> None:
        tri = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.float64))
        if tri.ndim != 3 or tri.shape[1:] != (3, 3):
            raise ValueError(f"triangles must have shape (T, 3, 3), got {tri.shape}")
        if not np.isfinite(tri).all():
            raise NonFiniteVertex("mesh contains non-finite vertex coordinates")
        self.triangles = tri
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(len(tri), 3)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @property
    def vertices(self) -> np.ndarray:
        """All corners as a flat (3T, 3) view."""
        return self.triangles.reshape(-1, 3)


@dataclass(frozen=True)
class BoundingBox:
    mins: tuple[float, float, float]
    maxs: tuple[float, float, float]

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.mins) + np.asarray(self.maxs)) / 2.0

    @property
    def extents(self) -> np.ndarray:
        return np.asarray(self.maxs) - np.asarray(self.mins)

    @property
    def largest_edge(self) -> float:
        return float(self.extents.max())


@dataclass
class ModelRecord:
    """One curated corpus entry."""

    id: str
    source_path: str
    triangle_count: int
    status: str  # "ok" or "corrupt"
    error: str = field(default="")


def parse_stl(data: bytes) -> TriangleMesh:
    """Parse STL bytes of either flavour into a mesh."""
    if len(data) == 0:
        raise EmptyMesh("empty input")
    if len(data) >= _HEADER_LEN + _COUNT_LEN:
        (count,) = struct.unpack_from("<I", data, _HEADER_LEN)
        if len(data) == _HEADER_LEN + _COUNT_LEN + _RECORD_LEN * count:
            return _parse_binary(data, count)
    if _first_token_is_solid(data):
        return _parse_ascii(data)
    if len(data) >= _HEADER_LEN + _COUNT_LEN:
        (count,) = struct.unpack_from("<I", data, _HEADER_LEN)
        have = (len(data) - _HEADER_LEN - _COUNT_LEN) // _RECORD_LEN
        raise Truncated(f"binary stl declares {count} facets but holds {have}")
    raise Truncated(f"{len(data)} bytes is too short for a binary stl header")


def load_stl(path: str | Path) -> TriangleMesh:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_stl(data)


def _first_token_is_solid(data: bytes) -> bool:
    head = data[:64].split(maxsplit=1)
    return bool(head) and head[0] == b"solid"


def _accept_normals(normals: np.ndarray) -> np.ndarray | None:
    lengths = np.linalg.norm(normals, axis=1)
    with np.errstate(invalid="ignore"):
        ok = np.abs(lengths - 1.0) <= _NORMAL_TOL
    if np.all(ok):
        return normals.astype(np.float64)
    return None


def _parse_binary(data: bytes, count: int) -> TriangleMesh:
    if count == 0:
        raise EmptyMesh("binary stl with zero facets")
    facets = np.frombuffer(data, dtype=_FACET_DTYPE, count=count, offset=_HEADER_LEN + _COUNT_LEN)
    vectors = facets["vectors"].astype(np.float64)
    triangles = vectors[:, 1:4, :]
    if not np.isfinite(triangles).all():
        raise NonFiniteVertex("binary stl contains non-finite vertex coordinates")
    return TriangleMesh(triangles=triangles, normals=_accept_normals(vectors[:, 0, :]))


def _parse_ascii(data: bytes) -> TriangleMesh:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedAscii(f"ascii stl is not valid utf-8: {exc}") from exc

    tokens: list[tuple[str, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            tokens.append((tok, lineno))
    cursor = _Cursor(tokens)

    cursor.expect("solid")
    # The solid name is optional and may contain spaces; skip to the
    # first keyword rather than guessing where the name stops.
    cursor.skip_until({"facet", "endsolid"})

    normals: list[list[float]] = []
    triangles: list[list[list[float]]] = []
    while cursor.peek() == "facet":
        cursor.expect("facet")
        cursor.expect("normal")
        normals.append([cursor.number() for _ in range(3)])
        cursor.expect("outer")
        cursor.expect("loop")
        corners = []
        for _ in range(3):
            cursor.expect("vertex")
            corners.append([cursor.number() for _ in range(3)])
        cursor.expect("endloop")
        cursor.expect("endfacet")
        triangles.append(corners)
    cursor.expect("endsolid")

    if not triangles:
        raise EmptyMesh("ascii stl with zero facets")
    tri = np.array(triangles, dtype=np.float64)
    if not np.isfinite(tri).all():
        raise NonFiniteVertex("ascii stl contains non-finite vertex coordinates")
    return TriangleMesh(triangles=tri, normals=_accept_normals(np.array(normals)))


class _Cursor:
    def __init__(self, tokens: list[tuple[str, int]]):
        self._tokens = tokens
        self._pos = 0

    def peek(self) -> str | None:
        if self._pos < len(self._tokens):
            return self._tokens[self._pos][0]
        return None

    def _next(self, expected: str) -> tuple[str, int]:
        if self._pos >= len(self._tokens):
            raise MalformedAscii(f"unexpected end of file, expected {expected}")
        tok = self._tokens[self._pos]
        self._pos += 1
        return tok

    def expect(self, keyword: str) -> None:
        tok, lineno = self._next(repr(keyword))
        if tok != keyword:
            raise MalformedAscii(f"line {lineno}: expected {keyword!r}, got {tok!r}")

    def skip_until(self, keywords: set[str]) -> None:
        while True:
            tok = self.peek()
            if tok is None:
                raise MalformedAscii(f"unexpected end of file, expected one of {sorted(keywords)}")
            if tok in keywords:
                return
            self._pos += 1

    def number(self) -> float:
        tok, lineno = self._next("a number")
        if "_" in tok:
            raise MalformedAscii(f"line {lineno}: expected a number, got {tok!r}")
        try:
            return float(tok)
        except ValueError:
            raise MalformedAscii(f"line {lineno}: expected a number, got {tok!r}") from None


def write_stl_binary(mesh: TriangleMesh, header: bytes = b"meshid binary stl") -> bytes:
    """Serialize a mesh as binary STL bytes."""
    normals = mesh.normals
    if normals is None:
        normals = compute_normals(mesh).normals
    count = mesh.triangle_count
    out = bytearray(header[:_HEADER_LEN].ljust(_HEADER_LEN, b"\0"))
    out += struct.pack("<I", count)
    records = np.zeros(count, dtype=_FACET_DTYPE)
    records["vectors"][:, 0, :] = normals
    records["vectors"][:, 1:4, :] = mesh.triangles
    out += records.tobytes()
    return bytes(out)


def write_stl_ascii(mesh: TriangleMesh, name: str = "meshid") -> str:
    """Serialize a mesh as ASCII STL text."""
    normals = mesh.normals
    if normals is None:
        normals = compute_normals(mesh).normals
    def fmt(values) -> str:
        # repr of a Python float is the shortest exact round-trip form
        return " ".join(repr(float(v)) for v in values)

    lines = [f"solid {name}"]
    for tri, normal in zip(mesh.triangles, normals):
        lines.append(f"  facet normal {fmt(normal)}")
        lines.append("    outer loop")
        for corner in tri:
            lines.append(f"      vertex {fmt(corner)}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    return "\n".join(lines) + "\n"


def bounding_box(mesh: TriangleMesh) -> BoundingBox:
    if mesh.triangle_count == 0:
        raise EmptyMesh("cannot take the bounding box of an empty mesh")
    verts = mesh.vertices
    mins = verts.min(axis=0)
    maxs = verts.max(axis=0)
    return BoundingBox(mins=tuple(mins.tolist()), maxs=tuple(maxs.tolist()))


def normalize(mesh: TriangleMesh) -> TriangleMesh:
    """Center the bounding box on the origin and scale its largest edge to 1.

    Applying normalize twice moves nothing by more than 1e-9, so the
    operation can be repeated safely anywhere in a pipeline.
    """
    box = bounding_box(mesh)
    extent = box.largest_edge
    if extent <= 0.0:
        raise DegenerateExtent("mesh bounding box has zero extent along every axis")
    shifted = (mesh.triangles - box.center) / extent
    return TriangleMesh(triangles=shifted, normals=mesh.normals, degenerate=mesh.degenerate)


def compute_normals(mesh: TriangleMesh) -> TriangleMesh:
    """Derive unit normals from vertex winding (right hand rule).

    Zero-area facets get the placeholder normal (0, 0, 1) and are
    flagged in ``degenerate`` so the renderer can skip them.
    """
    tri = mesh.triangles
    edge1 = tri[:, 1, :] - tri[:, 0, :]
    edge2 = tri[:, 2, :] - tri[:, 0, :]
    raw = np.cross(edge1, edge2)
    lengths = np.linalg.norm(raw, axis=1)
    degenerate = lengths == 0.0
    normals = np.zeros_like(raw)
    normals[degenerate] = (0.0, 0.0, 1.0)
    good = ~degenerate
    normals[good] = raw[good] / lengths[good, None]
    return TriangleMesh(triangles=tri, normals=normals, degenerate=degenerate)


def curate(root: str | Path, jobs: int = 1) -> list[ModelRecord]:
    """Scan a directory tree for STL files and build a model catalogue.

    Model ids come from file basenames; duplicate basenames in different
    subfolders get a numeric suffix in path order. Files that fail to
    parse are kept with status "corrupt" so a corpus report can account
    for every input.
    """
    root = Path(root)
    stl_paths: list[Path] = []
    for path in sorted(root.rglob("*"), key=str):
        if not path.is_file():
            continue
        if path.suffix.lower() == ".stl":
            stl_paths.append(path)
        else:
            log.warning("ignoring non-stl file %s", path)
    if not stl_paths:
        raise NoModels(f"no .stl files under {root}")

    def probe(path: Path) -> tuple[int, str, str]:
        try:
            mesh = load_stl(path)
        except StlError as exc:
            return 0, "corrupt", f"{type(exc).__name__}: {exc}"
        return mesh.triangle_count, "ok", ""

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            probed = list(pool.map(probe, stl_paths))
    else:
        probed = [probe(p) for p in stl_paths]

    seen: dict[str, int] = {}
    records = []
    for path, (count, status, error) in zip(stl_paths, probed):
        stem = path.stem
        seen[stem] = seen.get(stem, 0) + 1
        model_id = stem if seen[stem] == 1 else f"{stem}_{seen[stem]}"
        records.append(
            ModelRecord(
                id=model_id,
                source_path=str(path),
                triangle_count=count,
                status=status,
                error=error,
            )
        )
    records.sort(key=lambda record: record.id)
    return records
