"""Image to model retrieval over a trained classifier.

An index bundles the trained network with its class label table and,
when a render root is at hand, one preview image per class. A query
runs the exact preprocessing the training pipeline used (center crop,
bilinear resize, scale to [0, 1]) and ranks classes by classifier
probability, ties toward the lower label index.

``serve`` wraps an index in a small threaded HTTP service. Queries only
ever read the network, so concurrent requests are safe.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from .errors import DataError, IndexCorrupt, TooSmall
from .imops import decode_png, to_tensor
from .nn import Network, network_from_weights, predict_topk

log = logging.getLogger(__name__)

MIN_QUERY_SIDE = 16
MAX_BODY_BYTES = 16 * 1024 * 1024


@dataclass
class ModelIndex:
    network: Network
    labels: list[str]
    previews: dict[str, str]
    sources: dict[str, str]

    def __post_init__(self) -> None:
        if len(self.labels) != self.network.config.num_classes:
            raise IndexCorrupt(
                f"index holds {len(self.labels)} labels for a "
                f"{self.network.config.num_classes} class network"
            )

    @property
    def side(self) -> int:
        return self.network.config.input_shape[1]


@dataclass(frozen=True)
class QueryHit:
    label: str
    probability: float
    preview: str | None = None
    source: str | None = None


@dataclass(frozen=True)
class QueryResult:
    hits: tuple[QueryHit, ...]
    elapsed_ms: float


def load_index(
    weights_path: str | Path,
    render_root: str | Path | None = None,
    catalog_path: str | Path | None = None,
) -> ModelIndex:
    """Build a retrieval index from a weights file.

    ``render_root`` contributes one preview render per class when its
    class directories are present; ``catalog_path`` is the curation
    catalogue JSON and contributes source model paths.
    """
    network, labels = network_from_weights(weights_path)
    previews: dict[str, str] = {}
    if render_root is not None:
        root = Path(render_root)
        for label in labels:
            images = sorted((root / label).glob("*.png")) if (root / label).is_dir() else []
            if images:
                previews[label] = str(images[0])
    sources: dict[str, str] = {}
    if catalog_path is not None:
        for entry in json.loads(Path(catalog_path).read_text()):
            if entry.get("id") in labels:
                sources[entry["id"]] = entry.get("source_path", "")
    return ModelIndex(network=network, labels=labels, previews=previews, sources=sources)


def preprocess_query(image: np.ndarray, side: int) -> np.ndarray:
    """Query image to a network input tensor, exactly as training did."""
    height, width = image.shape[:2]
    if min(height, width) < MIN_QUERY_SIDE:
        raise TooSmall(f"query image is {width}x{height}; need at least {MIN_QUERY_SIDE} pixels per side")
    return to_tensor(image, side)


def query(index: ModelIndex, image: np.ndarray, k: int = 5) -> QueryResult:
    """Rank the k most likely models for an image."""
    started = time.perf_counter()
    tensor = preprocess_query(image, index.side)
    ranked = predict_topk(index.network, tensor, k)
    hits = tuple(
        QueryHit(
            label=index.labels[label_idx],
            probability=probability,
            preview=index.previews.get(index.labels[label_idx]),
            source=index.sources.get(index.labels[label_idx]),
        )
        for label_idx, probability in ranked
    )
    return QueryResult(hits=hits, elapsed_ms=(time.perf_counter() - started) * 1000.0)


def serve(
    index: ModelIndex,
    host: str = "127.0.0.1",
    port: int = 8080,
    max_body: int = MAX_BODY_BYTES,
) -> ThreadingHTTPServer:
    """Build the HTTP server for an index; call ``serve_forever`` to run.

    Endpoints: POST /query with a PNG body and optional ?k=, GET
    /classes, GET /healthz. Malformed input gets a 400, an oversized
    body a 413, and unexpected failures a 500 with no internal detail.
    """

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # route access noise to logging
            log.debug("http: " + fmt, *args)

        def _send(self, status: int, payload: bytes, content_type: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def _send_json(self, status: int, doc) -> None:
            self._send(status, json.dumps(doc).encode("utf-8"), "application/json")

        def do_GET(self) -> None:
            try:
                path = urlparse(self.path).path
                if path == "/healthz":
                    self._send(200, b"ok", "text/plain")
                elif path == "/classes":
                    self._send_json(200, index.labels)
                else:
                    self._send_json(404, {"error": "not found"})
            except Exception:
                log.exception("request failed")
                self._send_json(500, {"error": "internal error"})

        def do_POST(self) -> None:
            try:
                parsed = urlparse(self.path)
                if parsed.path != "/query":
                    self._send_json(404, {"error": "not found"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", ""))
                except ValueError:
                    self._send_json(400, {"error": "missing content length"})
                    return
                if length > max_body:
                    self._send_json(413, {"error": f"body exceeds {max_body} bytes"})
                    return
                if length <= 0:
                    self._send_json(400, {"error": "empty body"})
                    return
                body = self.rfile.read(length)
                k_values = parse_qs(parsed.query).get("k", ["5"])
                try:
                    k = int(k_values[-1])
                except ValueError:
                    self._send_json(400, {"error": f"k must be an integer, got {k_values[-1]!r}"})
                    return
                if not 1 <= k <= len(index.labels):
                    self._send_json(400, {"error": f"k must lie in [1, {len(index.labels)}]"})
                    return
                try:
                    image = decode_png(body)
                    result = query(index, image, k)
                except DataError as exc:
                    self._send_json(400, {"error": str(exc)})
                    return
                self._send_json(
                    200,
                    {
                        "results": [
                            {"label": h.label, "probability": h.probability, "preview": h.preview}
                            for h in result.hits
                        ],
                        "elapsed_ms": result.elapsed_ms,
                    },
                )
            except Exception:
                log.exception("request failed")
                self._send_json(500, {"error": "internal error"})

    server = ThreadingHTTPServer((host, port), Handler)
    server.daemon_threads = True
    return server
