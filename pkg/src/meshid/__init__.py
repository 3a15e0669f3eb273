"""meshid: render STL models into synthetic view datasets, train a CNN
classifier on them from scratch, and retrieve models from photographs."""

from . import dataset, experiment, imops, nn, render, retrieval, shapes, stl
from .errors import DataError, MeshidError

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "MeshidError",
    "__version__",
    "dataset",
    "experiment",
    "imops",
    "nn",
    "render",
    "retrieval",
    "shapes",
    "stl",
]
