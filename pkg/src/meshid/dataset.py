"""Dataset assembly over a directory of rendered views.

A render root is a directory with one subdirectory per class, each
holding PNG images. Class names are the subdirectory names in
lexicographic order, and the class label is the index into that order.
The manifest records files, the train/val assignment and the split
seed, and round-trips through JSON so a training run can be audited or
repeated exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyClass, EmptyPart, InsufficientClasses, NoClasses
from .imops import load_png, to_tensor, warp_affine


@dataclass(frozen=True)
class AugmentationPolicy:
    """Random horizontal flip, small rotation and shift.

    ``rotation_range`` is in degrees and ``shift_range`` is a fraction
    of the image side, both drawn uniformly and symmetrically around
    zero. A policy of all zeros is exactly the identity.
    """

    hflip_prob: float = 0.5
    rotation_range: float = 15.0
    shift_range: float = 0.1
    fill: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise DataError(f"hflip_prob must lie in [0, 1], got {self.hflip_prob}")
        if self.rotation_range < 0 or self.shift_range < 0:
            raise DataError("rotation_range and shift_range must be non-negative")


@dataclass
class DatasetManifest:
    root: str
    classes: tuple[str, ...]
    images: dict[str, tuple[str, ...]]
    split: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    val_frac: float | None = None

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def samples(self, part: str | None = None) -> list[tuple[str, int]]:
        """(relative path, label) pairs in class-major manifest order."""
        if part not in (None, "train", "val"):
            raise DataError(f"unknown dataset part {part!r}")
        out = []
        for label, cls in enumerate(self.classes):
            for rel in self.images[cls]:
                if part is None or self.split.get(rel) == part:
                    out.append((rel, label))
        return out


def build_manifest(render_root: str | Path, class_limit: int | None = None) -> DatasetManifest:
    """Scan a render root into an unsplit manifest.

    ``class_limit`` keeps only the first N classes in lexicographic
    order, which is how sweep cells with growing class counts stay
    nested inside each other.
    """
    root = Path(render_root)
    class_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: d.name) if root.is_dir() else []
    if not class_dirs:
        raise NoClasses(f"no class subdirectories under {root}")
    if class_limit is not None:
        if class_limit < 1:
            raise DataError(f"class_limit must be positive, got {class_limit}")
        if class_limit > len(class_dirs):
            raise InsufficientClasses(
                f"asked for {class_limit} classes but {root} holds {len(class_dirs)}"
            )
        class_dirs = class_dirs[:class_limit]
    images: dict[str, tuple[str, ...]] = {}
    for class_dir in class_dirs:
        names = sorted(p.name for p in class_dir.glob("*.png"))
        if not names:
            raise EmptyClass(f"class directory {class_dir} holds no png images")
        images[class_dir.name] = tuple(f"{class_dir.name}/{name}" for name in names)
    return DatasetManifest(root=str(root), classes=tuple(d.name for d in class_dirs), images=images)


def split(manifest: DatasetManifest, val_frac: float = 0.3, seed: int = 0) -> DatasetManifest:
    """Assign each image to train or val, stratified per class.

    Every class contributes round(val_frac * n) validation images,
    rounding half up, chosen by a seeded shuffle. The same seed always
    produces the same assignment.
    """
    if not 0.0 <= val_frac < 1.0:
        raise DataError(f"val_frac must lie in [0, 1), got {val_frac}")
    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for cls in manifest.classes:
        rels = manifest.images[cls]
        count = int(np.floor(val_frac * len(rels) + 0.5))
        order = rng.permutation(len(rels))
        chosen = set(order[:count].tolist())
        for idx, rel in enumerate(rels):
            assignment[rel] = "val" if idx in chosen else "train"
    return replace(manifest, split=assignment, seed=seed, val_frac=val_frac)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    payload = {
        "root": manifest.root,
        "classes": list(manifest.classes),
        "images": {cls: list(rels) for cls, rels in manifest.images.items()},
        "split": manifest.split,
        "seed": manifest.seed,
        "val_frac": manifest.val_frac,
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def load_manifest(path: str | Path) -> DatasetManifest:
    payload = json.loads(Path(path).read_text())
    return DatasetManifest(
        root=payload["root"],
        classes=tuple(payload["classes"]),
        images={cls: tuple(rels) for cls, rels in payload["images"].items()},
        split=dict(payload["split"]),
        seed=payload.get("seed"),
        val_frac=payload.get("val_frac"),
    )


def augment(image: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    """Apply one random draw of the policy to an image.

    Exactly four variates are consumed per call (flip, angle, two
    shifts) no matter what the policy enables, so a stream of draws
    stays aligned when a policy field is zeroed.
    """
    height, width = image.shape[:2]
    flip = rng.random() < policy.hflip_prob
    angle = float(rng.uniform(-policy.rotation_range, policy.rotation_range))
    shift_x = float(rng.uniform(-policy.shift_range, policy.shift_range)) * width
    shift_y = float(rng.uniform(-policy.shift_range, policy.shift_range)) * height
    out = image[:, ::-1] if flip else image
    if angle != 0.0 or shift_x != 0.0 or shift_y != 0.0:
        out = warp_affine(out, angle, shift_x, shift_y, fill=policy.fill)
    return out


@dataclass
class Batch:
    x: np.ndarray  # (N, 3, side, side) float32 in [0, 1]
    y: np.ndarray  # (N,) int64 labels
    paths: list[str]


def batches(
    manifest: DatasetManifest,
    part: str,
    side: int,
    batch_size: int = 32,
    shuffle: bool = False,
    policy: AugmentationPolicy | None = None,
    seed=None,
):
    """Stream batches of image tensors for one split part.

    The train part may be shuffled and augmented; the val part is always
    served in manifest order with no augmentation regardless of the
    arguments. The final batch keeps its short remainder.
    """
    if batch_size < 1:
        raise DataError(f"batch_size must be positive, got {batch_size}")
    items = manifest.samples(part)
    if not items:
        raise EmptyPart(f"part {part!r} has no samples; was the manifest split?")
    if part == "val":
        shuffle = False
        policy = None
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(items)) if shuffle else np.arange(len(items))
    root = Path(manifest.root)
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        tensors = []
        labels = []
        paths = []
        for idx in chunk:
            rel, label = items[idx]
            image = load_png(root / rel)
            if policy is not None:
                image = augment(image, policy, rng)
            tensors.append(to_tensor(image, side))
            labels.append(label)
            paths.append(rel)
        yield Batch(x=np.stack(tensors), y=np.array(labels, dtype=np.int64), paths=paths)
