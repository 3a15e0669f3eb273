"""Shared fixtures: rendered corpora, one trained network, STL files on disk.

The rendered view roots and the five class training run are expensive,
so they are session scoped and shared by every test that needs them.
All of them are fully deterministic, which is what lets the slower
tests assert exact values instead of tolerances.
"""

import json
import time

import pytest

from meshid import dataset, experiment, shapes, stl
from meshid.nn import build_alexnet, save_weights
from meshid.render import RenderConfig, render_views

NO_AUGMENT = dataset.AugmentationPolicy(hflip_prob=0.0, rotation_range=0.0, shift_range=0.0)


@pytest.fixture(scope="session")
def views_root(tmp_path_factory):
    """25 procedural classes rendered at 64 px under <root>/60 and <root>/90."""
    root = tmp_path_factory.mktemp("views")
    corpus = shapes.demo_corpus(25)
    for step in (60.0, 90.0):
        config = RenderConfig(resolution=64, degree_step=step)
        for name, mesh in corpus.items():
            render_views(stl.normalize(mesh), config, root / f"{step:g}" / name, model_id=name)
    return root


@pytest.fixture(scope="session")
def render_root_60(views_root):
    return views_root / "60"


@pytest.fixture(scope="session")
def render_root_90(views_root):
    return views_root / "90"


@pytest.fixture(scope="session")
def smoke(render_root_60, tmp_path_factory):
    """A five class desk-preset run shared by the training-dependent tests.

    Augmentation is off: the run measures how well the network learns
    the clean renders themselves. Returns the trained network, its run
    result, the split manifest and the saved weights path.
    """
    manifest = dataset.split(
        dataset.build_manifest(render_root_60, class_limit=5), val_frac=0.3, seed=0
    )
    config = build_alexnet(5, preset="desk")
    hyper = experiment.default_hyperparameters("desk")
    started = time.perf_counter()
    network, result = experiment.train(
        config, manifest, hyper, policy=NO_AUGMENT, degree_step=60.0
    )
    train_seconds = time.perf_counter() - started
    render_seconds = sum(
        json.loads((render_root_60 / cls / "render_manifest.json").read_text())["render_seconds"]
        for cls in manifest.classes
    )
    out_dir = tmp_path_factory.mktemp("smoke")
    save_weights(out_dir / "weights.stwn", network, list(manifest.classes))
    dataset.save_manifest(manifest, out_dir / "manifest.json")
    return {
        "manifest": manifest,
        "network": network,
        "result": result,
        "weights": out_dir / "weights.stwn",
        "out_dir": out_dir,
        "train_seconds": train_seconds,
        "render_seconds": render_seconds,
    }


@pytest.fixture(scope="session")
def stl_dir(tmp_path_factory):
    """A small corpus on disk: binary, ascii, duplicate stem, corrupt, stray."""
    root = tmp_path_factory.mktemp("models")
    (root / "nested").mkdir()
    cube = shapes.cube()
    (root / "cube.stl").write_bytes(stl.write_stl_binary(cube))
    (root / "nested" / "cube.stl").write_bytes(stl.write_stl_binary(shapes.box(1.0, 1.0, 0.5)))
    (root / "pyramid.stl").write_text(stl.write_stl_ascii(shapes.pyramid(4), name="pyramid"))
    (root / "broken.stl").write_bytes(stl.write_stl_binary(cube)[:100])
    (root / "notes.txt").write_text("not a mesh\n")
    return root
