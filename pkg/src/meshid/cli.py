"""Command line interface.

One subcommand per pipeline stage: fetch a corpus, render it, train,
sweep a grid, evaluate, query, serve. Every command prints exactly one
machine-readable JSON line to stdout; progress and diagnostics go to
stderr. Exit codes: 0 success, 2 usage, 3 bad input data, 4 runtime
failure.

A JSON config file with flat keys matching the option names can be
passed with --config; explicit flags win over config values.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from urllib.error import URLError
from urllib.parse import urlparse
from urllib.request import urlopen

import click

from .errors import DataError, MeshidError

log = logging.getLogger("meshid")


def _fail(exc: BaseException, code: int) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _finish(work):
    """Run a command body, mapping errors onto the exit code contract."""
    try:
        return work()
    except DataError as exc:
        _fail(exc, 3)
    except (MeshidError, OSError) as exc:
        _fail(exc, 4)


def _emit(doc: dict) -> None:
    click.echo(json.dumps(doc, sort_keys=True))


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with flat keys matching option names.")
@click.option("--verbose", is_flag=True, help="Debug level progress on stderr.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if config_path is not None:
        try:
            defaults = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"cannot read config {config_path}: {exc}")
        if not isinstance(defaults, dict):
            raise click.UsageError(f"config {config_path} must hold a JSON object")
        ctx.default_map = {name: dict(defaults) for name in cli.commands}


main = cli


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--jobs", default=1, show_default=True, help="Parallel downloads.")
@click.option("--timeout", default=30.0, show_default=True, help="Per request timeout in seconds.")
def fetch(manifest: str, out_dir: str, jobs: int, timeout: float) -> None:
    """Download every URL listed in MANIFEST into OUT_DIR.

    Lines that are blank or start with # are skipped, files that
    already exist are kept, and individual failures do not stop the
    run. Writes provenance.json recording url, sha256, size and
    fetch time for every downloaded file.
    """

    def work():
        target = Path(out_dir)
        target.mkdir(parents=True, exist_ok=True)
        urls = []
        for line in Path(manifest).read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                urls.append(line)

        names: dict[str, int] = {}
        plans = []
        for url in urls:
            base = Path(urlparse(url).path).name or "download"
            names[base] = names.get(base, 0) + 1
            if names[base] > 1:
                base = f"{Path(base).stem}_{names[base]}{Path(base).suffix}"
            plans.append((url, target / base))

        def grab(plan):
            url, path = plan
            if path.exists():
                log.info("skipping %s, already present", path.name)
                return ("skipped", url, path, None)
            try:
                digest = hashlib.sha256()
                size = 0
                with urlopen(url, timeout=timeout) as response, open(path, "wb") as sink:
                    while True:
                        chunk = response.read(65536)
                        if not chunk:
                            break
                        digest.update(chunk)
                        size += len(chunk)
                        sink.write(chunk)
                log.info("fetched %s (%d bytes)", path.name, size)
                return ("fetched", url, path, (digest.hexdigest(), size))
            except (URLError, OSError, ValueError) as exc:
                log.warning("failed %s: %s", url, exc)
                path.unlink(missing_ok=True)
                return ("failed", url, path, None)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(grab, plans))
        else:
            outcomes = [grab(plan) for plan in plans]

        provenance_path = target / "provenance.json"
        provenance = []
        if provenance_path.exists():
            provenance = json.loads(provenance_path.read_text())
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        for status, url, path, extra in outcomes:
            if status == "fetched":
                provenance.append(
                    {
                        "url": url,
                        "file": path.name,
                        "sha256": extra[0],
                        "bytes": extra[1],
                        "fetched_at": stamp,
                    }
                )
        provenance_path.write_text(json.dumps(provenance, indent=2))

        tally = {status: sum(1 for o in outcomes if o[0] == status) for status in ("fetched", "skipped", "failed")}
        _emit({"out_dir": str(target), **tally})
        if urls and tally["failed"] == len(urls):
            _fail(MeshidError("every download failed"), 4)

    _finish(work)


@cli.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_root", type=click.Path(file_okay=False))
@click.option("--degree-step", default=30.0, show_default=True, help="Camera sphere step in degrees.")
@click.option("--resolution", default=540, show_default=True)
@click.option("--camera-radius", default=3.0, show_default=True)
@click.option("--fov", default=30.0, show_default=True, help="Vertical field of view in degrees.")
@click.option("--jobs", default=1, show_default=True, help="Models rendered in parallel.")
def render(corpus_dir: str, out_root: str, degree_step: float, resolution: int,
           camera_radius: float, fov: float, jobs: int) -> None:
    """Render every STL model under CORPUS_DIR from all camera poses.

    Views land in OUT_ROOT/<model id>/{lat}_{lon}.png next to a render
    manifest per model; the curation catalogue goes to
    OUT_ROOT/catalog.json. Corrupt models are catalogued and skipped.
    """

    def work():
        from dataclasses import asdict

        from . import stl
        from .render import RenderConfig, camera_positions, render_views

        config = RenderConfig(
            resolution=resolution,
            degree_step=degree_step,
            fov_y=fov,
            camera_radius=camera_radius,
        )
        started = time.perf_counter()
        records = stl.curate(corpus_dir)
        root = Path(out_root)
        root.mkdir(parents=True, exist_ok=True)
        (root / "catalog.json").write_text(json.dumps([asdict(r) for r in records], indent=2))

        usable = [r for r in records if r.status == "ok"]
        for record in records:
            if record.status != "ok":
                log.warning("skipping corrupt model %s (%s)", record.id, record.error)

        def one(record):
            mesh = stl.normalize(stl.load_stl(record.source_path))
            render_views(mesh, config, root / record.id, model_id=record.id)
            log.info("rendered %s", record.id)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                list(pool.map(one, usable))
        else:
            for record in usable:
                one(record)

        _emit(
            {
                "out_root": str(root),
                "models": len(usable),
                "corrupt": len(records) - len(usable),
                "views_per_model": len(camera_positions(degree_step, camera_radius)),
                "seconds": round(time.perf_counter() - started, 3),
            }
        )

    _finish(work)


def _policy_options(fn):
    fn = click.option("--hflip-prob", default=0.5, show_default=True)(fn)
    fn = click.option("--rotation-range", default=15.0, show_default=True,
                      help="Max augmentation rotation in degrees.")(fn)
    fn = click.option("--shift-range", default=0.1, show_default=True,
                      help="Max augmentation shift as a fraction of the side.")(fn)
    return fn


@cli.command()
@click.argument("render_root", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--preset", default="desk", show_default=True, type=click.Choice(["full", "desk"]))
@click.option("--classes", "class_limit", type=int, default=None,
              help="Keep only the first N classes in name order.")
@click.option("--epochs", type=int, default=None, help="Override the preset epoch count.")
@click.option("--learning-rate", type=float, default=None, help="Override the preset learning rate.")
@click.option("--batch-size", type=int, default=None)
@click.option("--val-frac", default=0.3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--degree-step", type=float, default=None,
              help="Recorded in reports; does not affect training.")
@_policy_options
def train(render_root: str, out_dir: str, preset: str, class_limit: int | None,
          epochs: int | None, learning_rate: float | None, batch_size: int | None,
          val_frac: float, seed: int, degree_step: float | None,
          hflip_prob: float, rotation_range: float, shift_range: float) -> None:
    """Train a classifier on rendered views under RENDER_ROOT.

    Writes weights.stwn, manifest.json and the metrics report into
    OUT_DIR. The run is fully determined by its inputs and --seed.
    """

    def work():
        from . import dataset, experiment
        from .nn import build_alexnet, save_weights

        manifest = dataset.split(
            dataset.build_manifest(render_root, class_limit=class_limit),
            val_frac=val_frac,
            seed=seed,
        )
        hyper = experiment.default_hyperparameters(preset)
        from dataclasses import replace

        hyper = replace(
            hyper,
            val_frac=val_frac,
            seed=seed,
            **{k: v for k, v in {
                "epochs": epochs, "learning_rate": learning_rate, "batch_size": batch_size,
            }.items() if v is not None},
        )
        policy = dataset.AugmentationPolicy(
            hflip_prob=hflip_prob, rotation_range=rotation_range, shift_range=shift_range
        )
        config = build_alexnet(manifest.class_count, preset=preset)
        network, result = experiment.train(
            config, manifest, hyper, policy=policy, degree_step=degree_step
        )
        target = Path(out_dir)
        target.mkdir(parents=True, exist_ok=True)
        dataset.save_manifest(manifest, target / "manifest.json")
        save_weights(target / "weights.stwn", network, list(manifest.classes))
        experiment.emit_report([result], target)
        final = result.final
        _emit(
            {
                "out_dir": str(target),
                "weights": str(target / "weights.stwn"),
                "classes": manifest.class_count,
                "epochs": len(result.records),
                "final_train_loss": round(final.train_loss, 6),
                "final_val_top1": round(final.val_top1, 6),
                "final_val_top5": round(final.val_top5, 6),
                "seconds": round(result.total_seconds, 3),
            }
        )

    _finish(work)


@cli.command()
@click.argument("render_root", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--degree-steps", default="60", show_default=True,
              help="Comma separated degree steps; expects RENDER_ROOT/<step>/ layouts.")
@click.option("--class-counts", default="5,10,25", show_default=True,
              help="Comma separated class counts.")
@click.option("--preset", default="desk", show_default=True, type=click.Choice(["full", "desk"]))
@click.option("--epochs", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--val-frac", default=0.3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--save-networks", is_flag=True, help="Also write weights per sweep cell.")
def sweep(render_root: str, out_dir: str, degree_steps: str, class_counts: str,
          preset: str, epochs: int | None, learning_rate: float | None,
          batch_size: int | None, val_frac: float, seed: int, save_networks: bool) -> None:
    """Cross degree steps with class counts and train every cell.

    Reports (metrics.csv, summary.csv, one accuracy chart per step) are
    rewritten after each cell, so partial sweeps are already usable.
    """

    def work():
        from .experiment import ExperimentPlan, run_sweep

        try:
            steps = tuple(float(s) for s in degree_steps.split(",") if s.strip())
            counts = tuple(int(c) for c in class_counts.split(",") if c.strip())
        except ValueError as exc:
            raise click.UsageError(f"bad sweep grid: {exc}")
        if not steps or not counts:
            raise click.UsageError("sweep needs at least one degree step and one class count")
        plan = ExperimentPlan(
            degree_steps=steps,
            class_counts=counts,
            preset=preset,
            epochs=epochs,
            learning_rate=learning_rate,
            batch_size=batch_size,
            val_frac=val_frac,
            seed=seed,
        )
        results = run_sweep(plan, render_root, out_dir=out_dir, save_networks=save_networks)
        _emit(
            {
                "out_dir": str(Path(out_dir)),
                "cells": len(results),
                "ok": sum(1 for r in results if r.status == "ok"),
                "failed": sum(1 for r in results if r.status != "ok"),
            }
        )

    _finish(work)


@cli.command("eval")
@click.argument("weights", type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Dataset manifest; defaults to manifest.json beside the weights.")
@click.option("--part", default="val", show_default=True, type=click.Choice(["train", "val"]))
def eval_cmd(weights: str, manifest_path: str | None, part: str) -> None:
    """Re-evaluate stored weights on a dataset manifest.

    On a training run's own manifest this reproduces the final epoch's
    validation numbers exactly.
    """

    def work():
        from .dataset import load_manifest
        from .experiment import evaluate
        from .nn import network_from_weights

        path = Path(manifest_path) if manifest_path else Path(weights).parent / "manifest.json"
        if not path.exists():
            raise DataError(f"no manifest at {path}; pass --manifest")
        manifest = load_manifest(path)
        network, labels = network_from_weights(weights)
        if list(labels) != list(manifest.classes):
            raise DataError("weights and manifest disagree on class labels")
        loss, top1, top5 = evaluate(network, manifest, part=part)
        _emit(
            {
                "part": part,
                "loss": round(loss, 6),
                "top1": round(top1, 6),
                "top5": round(top5, 6),
                "samples": len(manifest.samples(part)),
            }
        )

    _finish(work)


@cli.command()
@click.argument("weights", type=click.Path(exists=True, dir_okay=False))
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("-k", "top_k", type=int, default=None, help="Results to return; defaults to min(5, classes).")
@click.option("--render-root", type=click.Path(file_okay=False), default=None,
              help="Render root used to attach preview images.")
@click.option("--catalog", type=click.Path(dir_okay=False), default=None,
              help="Curation catalogue JSON used to attach source paths.")
def query(weights: str, image: str, top_k: int | None, render_root: str | None,
          catalog: str | None) -> None:
    """Rank the most likely models for one image."""

    def work():
        from .imops import load_png
        from .retrieval import load_index
        from .retrieval import query as run_query

        index = load_index(weights, render_root=render_root, catalog_path=catalog)
        k = top_k if top_k is not None else min(5, len(index.labels))
        result = run_query(index, load_png(image), k=k)
        _emit(
            {
                "results": [
                    {
                        "label": h.label,
                        "probability": round(h.probability, 6),
                        "preview": h.preview,
                        "source": h.source,
                    }
                    for h in result.hits
                ],
                "elapsed_ms": round(result.elapsed_ms, 3),
            }
        )

    _finish(work)


@cli.command()
@click.argument("weights", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--render-root", type=click.Path(file_okay=False), default=None)
@click.option("--catalog", type=click.Path(dir_okay=False), default=None)
@click.option("--max-body-mib", default=16, show_default=True, help="Largest accepted request body.")
def serve(weights: str, host: str, port: int, render_root: str | None,
          catalog: str | None, max_body_mib: int) -> None:
    """Serve the retrieval index over HTTP until interrupted."""

    def work():
        from .retrieval import load_index
        from .retrieval import serve as build_server

        index = load_index(weights, render_root=render_root, catalog_path=catalog)
        server = build_server(index, host=host, port=port, max_body=max_body_mib * 1024 * 1024)
        bound_host, bound_port = server.server_address[:2]
        _emit({"listening": f"{bound_host}:{bound_port}", "classes": len(index.labels)})
        log.info("serving on %s:%d, interrupt to stop", bound_host, bound_port)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()

    _finish(work)


if __name__ == "__main__":
    main()
