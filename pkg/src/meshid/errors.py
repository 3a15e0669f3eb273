"""Exception hierarchy shared by every meshid module.

Two branches matter for the command line tool: ``DataError`` covers bad
input (malformed files, impossible arguments, missing classes) and maps
to exit code 3, everything else under ``MeshidError`` is a runtime
failure and maps to exit code 4.
"""


class MeshidError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MeshidError):
    """Input data or arguments are invalid."""


# --- STL parsing and curation ---

class StlError(DataError):
    """A byte sequence could not be parsed as STL."""


class Truncated(StlError):
    """Binary STL shorter than its declared facet count implies."""


class MalformedAscii(StlError):
    """ASCII STL violating the solid/facet/vertex grammar."""


class NonFiniteVertex(StlError):
    """STL payload carries NaN or infinite vertex coordinates."""


class EmptyMesh(StlError):
    """A mesh with zero triangles where at least one is required."""


class NoModels(DataError):
    """A corpus directory contains no STL files at all."""


class DegenerateExtent(DataError):
    """Mesh bounding box has zero size along its largest axis."""


# --- rendering ---

class BadStep(DataError):
    """Degree step that does not evenly tile the camera sphere."""


class DegenerateCamera(DataError):
    """Camera placed inside the model or at the origin."""


# --- dataset assembly ---

class NoClasses(DataError):
    """Render root has no class subdirectories."""


class EmptyClass(DataError):
    """A class directory exists but holds no images."""


class EmptyPart(DataError):
    """A requested split part (train or val) has no samples."""


# --- network and weights ---

class ShapeMismatch(MeshidError):
    """Layer stack or stored tensors do not chain into a valid network."""


class BadLabel(MeshidError):
    """A label index outside [0, num_classes)."""


class BadK(MeshidError):
    """A top-k request with k < 1 or k > num_classes."""


class BadMagic(DataError):
    """Weights file does not start with the expected magic bytes."""


class VersionMismatch(DataError):
    """Weights file written by an incompatible format version."""


# --- training runs ---

class ClassMismatch(MeshidError):
    """Network output width disagrees with the dataset class count."""


class InsufficientClasses(DataError):
    """A sweep asks for more classes than the render root provides."""


class Divergence(MeshidError):
    """Training loss exploded past the divergence threshold."""


# --- retrieval ---

class TooSmall(DataError):
    """Query image below the minimum usable side length."""


class IndexCorrupt(DataError):
    """Retrieval index whose labels and network disagree."""


class IoFailure(MeshidError):
    """Filesystem write or read failed mid pipeline."""
