"""Training runs, sweep grids and report emission.

A run trains one network on one dataset manifest and records per-epoch
loss, top-1 and top-5 accuracy plus wall time. A sweep crosses degree
steps with class counts over a rendered corpus laid out as
``render_root/<step>/<class>/``, re-emitting reports after every cell
so a partially finished sweep is already usable.

Every random choice (weight init, shuffling, augmentation draws,
dropout masks) derives from the run seed, so two runs with the same
inputs produce identical parameters and identical metric numbers; wall
clock columns are the only thing that varies.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import (
    AugmentationPolicy,
    DatasetManifest,
    batches,
    build_manifest,
    save_manifest,
    split,
)
from .errors import BadK, ClassMismatch, DataError, Divergence, InsufficientClasses
from .nn import Adam, Network, NetworkConfig, build_alexnet, save_weights, softmax_cross_entropy

log = logging.getLogger(__name__)

_DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class Hyperparameters:
    learning_rate: float
    epochs: int
    batch_size: int = 32
    val_frac: float = 0.3
    seed: int = 0


def default_hyperparameters(preset: str = "full") -> Hyperparameters:
    if preset == "full":
        return Hyperparameters(learning_rate=1e-6, epochs=200)
    if preset == "desk":
        return Hyperparameters(learning_rate=1e-4, epochs=50)
    raise DataError(f"unknown preset {preset!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_top1: float
    val_loss: float
    val_top1: float
    val_top5: float
    seconds: float


@dataclass
class RunResult:
    degree_step: float | None
    class_count: int
    records: list[EpochRecord]
    total_seconds: float
    steps_per_epoch: int
    status: str = "ok"  # "ok" or "failed"
    error: str = ""

    @property
    def avg_epoch_seconds(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.seconds for r in self.records) / len(self.records)

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None


def topk_accuracy(logits: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose true label sits among the k largest scores.

    Ties break toward the lower class index, the same rule the
    retrieval path uses.
    """
    num_classes = logits.shape[1]
    if not 1 <= k <= num_classes:
        raise BadK(f"k must lie in [1, {num_classes}], got {k}")
    ranked = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    hits = (ranked == np.asarray(labels)[:, None]).any(axis=1)
    return float(hits.mean())


def train(
    config: NetworkConfig,
    manifest: DatasetManifest,
    hyper: Hyperparameters,
    policy: AugmentationPolicy | None = None,
    degree_step: float | None = None,
) -> tuple[Network, RunResult]:
    """Train a fresh network on a split manifest.

    Raises :class:`Divergence` when the batch loss passes ten times the
    first batch's loss or stops being finite; the exception carries the
    partial result in its ``partial`` attribute.
    """
    if config.num_classes != manifest.class_count:
        raise ClassMismatch(
            f"network expects {config.num_classes} classes, manifest holds {manifest.class_count}"
        )
    if policy is None:
        policy = AugmentationPolicy()
    side = config.input_shape[1]
    network = Network(config, seed=np.random.SeedSequence([hyper.seed, 0]))
    optimizer = Adam(network.params, learning_rate=hyper.learning_rate)
    train_count = len(manifest.samples("train"))
    steps_per_epoch = -(-train_count // hyper.batch_size)
    records: list[EpochRecord] = []
    started = time.perf_counter()
    first_loss = None

    def partial(status: str, error: str) -> RunResult:
        return RunResult(
            degree_step=degree_step,
            class_count=config.num_classes,
            records=records,
            total_seconds=time.perf_counter() - started,
            steps_per_epoch=steps_per_epoch,
            status=status,
            error=error,
        )

    for epoch in range(1, hyper.epochs + 1):
        tick = time.perf_counter()
        dropout_rng = np.random.default_rng(np.random.SeedSequence([hyper.seed, 3, epoch]))
        loss_sum = hit_sum = seen = 0
        stream = batches(
            manifest,
            "train",
            side,
            batch_size=hyper.batch_size,
            shuffle=True,
            policy=policy,
            seed=np.random.SeedSequence([hyper.seed, 1, epoch]),
        )
        for batch in stream:
            logits = network.forward(batch.x, train=True, rng=dropout_rng)
            loss, _, dlogits = softmax_cross_entropy(logits, batch.y)
            if first_loss is None:
                first_loss = loss
            if not np.isfinite(loss) or loss > _DIVERGENCE_FACTOR * first_loss:
                error = f"loss {loss:.4f} passed {_DIVERGENCE_FACTOR} times the initial {first_loss:.4f}"
                exc = Divergence(error)
                exc.partial = partial("failed", error)
                raise exc
            network.backward(dlogits)
            optimizer.step()
            n = len(batch.y)
            loss_sum += loss * n
            hit_sum += topk_accuracy(logits, batch.y, 1) * n
            seen += n
        val_loss, val_top1, val_top5 = evaluate(network, manifest)
        records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / seen,
                train_top1=hit_sum / seen,
                val_loss=val_loss,
                val_top1=val_top1,
                val_top5=val_top5,
                seconds=time.perf_counter() - tick,
            )
        )
        log.info(
            "epoch %d/%d train_loss=%.4f train_top1=%.3f val_top1=%.3f val_top5=%.3f",
            epoch, hyper.epochs, records[-1].train_loss, records[-1].train_top1, val_top1, val_top5,
        )
    return network, partial("ok", "")


def evaluate(network: Network, manifest: DatasetManifest, part: str = "val") -> tuple[float, float, float]:
    """Loss, top-1 and top-5 accuracy over one part, never augmented."""
    side = network.config.input_shape[1]
    k = min(5, network.config.num_classes)
    loss_sum = top1_sum = topk_sum = seen = 0
    for batch in batches(manifest, part, side, batch_size=32):
        logits = network.forward(batch.x, train=False)
        loss, _, _ = softmax_cross_entropy(logits, batch.y)
        n = len(batch.y)
        loss_sum += loss * n
        top1_sum += topk_accuracy(logits, batch.y, 1) * n
        topk_sum += topk_accuracy(logits, batch.y, k) * n
        seen += n
    return loss_sum / seen, top1_sum / seen, topk_sum / seen


@dataclass(frozen=True)
class ExperimentPlan:
    degree_steps: tuple[float, ...]
    class_counts: tuple[int, ...]
    preset: str = "desk"
    epochs: int | None = None
    learning_rate: float | None = None
    batch_size: int | None = None
    val_frac: float = 0.3
    seed: int = 0
    lrn_enabled: bool | None = None
    policy: AugmentationPolicy = field(default_factory=AugmentationPolicy)

    def hyperparameters(self) -> Hyperparameters:
        hyper = default_hyperparameters(self.preset)
        if self.epochs is not None:
            hyper = replace(hyper, epochs=self.epochs)
        if self.learning_rate is not None:
            hyper = replace(hyper, learning_rate=self.learning_rate)
        if self.batch_size is not None:
            hyper = replace(hyper, batch_size=self.batch_size)
        return replace(hyper, val_frac=self.val_frac, seed=self.seed)


def run_sweep(
    plan: ExperimentPlan,
    render_root: str | Path,
    out_dir: str | Path | None = None,
    save_networks: bool = False,
) -> list[RunResult]:
    """Train every (degree step, class count) cell of the plan's grid.

    Expects renders laid out as ``render_root/<step>/<class>/``. Cells
    run in plan order; reports under ``out_dir`` are rewritten after
    each cell, and diverged cells are recorded as failed rather than
    aborting the sweep.
    """
    root = Path(render_root)
    hyper = plan.hyperparameters()
    want = max(plan.class_counts)
    for step in plan.degree_steps:
        step_dir = root / _fmt(step)
        if not step_dir.is_dir():
            raise DataError(f"no renders for step {_fmt(step)} under {root}")
        have = sum(1 for d in step_dir.iterdir() if d.is_dir())
        if have < want:
            raise InsufficientClasses(
                f"sweep wants up to {want} classes but {step_dir} holds {have}"
            )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    results: list[RunResult] = []
    for step in plan.degree_steps:
        for count in plan.class_counts:
            log.info("sweep cell: step=%s classes=%d", _fmt(step), count)
            manifest = split(
                build_manifest(root / _fmt(step), class_limit=count),
                val_frac=plan.val_frac,
                seed=plan.seed,
            )
            config = build_alexnet(count, preset=plan.preset, lrn_enabled=plan.lrn_enabled)
            try:
                network, result = train(
                    config, manifest, hyper, policy=plan.policy, degree_step=step
                )
            except Divergence as exc:
                log.warning("cell step=%s classes=%d diverged: %s", _fmt(step), count, exc)
                network, result = None, exc.partial
            results.append(result)
            if out_dir is not None:
                save_manifest(manifest, out_dir / f"manifest_{_fmt(step)}_{count}.json")
                if save_networks and network is not None:
                    save_weights(
                        out_dir / f"weights_{_fmt(step)}_{count}.stwn",
                        network,
                        list(manifest.classes),
                    )
                emit_report(results, out_dir)
    return results


def emit_report(results: list[RunResult], out_dir: str | Path) -> None:
    """Write metrics.csv, summary.csv and one accuracy chart per step."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_metrics(results, out_dir / "metrics.csv")
    _write_summary(results, out_dir / "summary.csv")
    for step in sorted({r.degree_step for r in results if r.degree_step is not None}):
        chart = [r for r in results if r.degree_step == step and r.status == "ok" and r.final]
        chart.sort(key=lambda r: r.class_count)
        svg = _accuracy_chart(step, chart)
        (out_dir / f"accuracy_vs_classes_{_fmt(step)}deg.svg").write_text(svg)


def _write_metrics(results: list[RunResult], path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["degree_step", "class_count", "epoch", "train_loss", "train_top1",
             "val_loss", "val_top1", "val_top5", "epoch_seconds"]
        )
        for result in results:
            for record in result.records:
                writer.writerow([
                    _fmt(result.degree_step) if result.degree_step is not None else "",
                    result.class_count,
                    record.epoch,
                    f"{record.train_loss:.6f}",
                    f"{record.train_top1:.6f}",
                    f"{record.val_loss:.6f}",
                    f"{record.val_top1:.6f}",
                    f"{record.val_top5:.6f}",
                    f"{record.seconds:.3f}",
                ])


def _write_summary(results: list[RunResult], path: Path) -> None:
    steps = sorted({r.degree_step for r in results if r.degree_step is not None})
    counts = sorted({r.class_count for r in results})
    cells = {(r.degree_step, r.class_count): r for r in results}
    header = ["class_count"]
    for step in steps:
        header.append(f"total_seconds_{_fmt(step)}deg")
    for step in steps:
        header.append(f"avg_epoch_seconds_{_fmt(step)}deg")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for count in counts:
            row: list[str] = [str(count)]
            for column in ("total", "avg"):
                for step in steps:
                    cell = cells.get((step, count))
                    if cell is None or cell.status != "ok":
                        row.append("")
                    elif column == "total":
                        row.append(f"{cell.total_seconds:.3f}")
                    else:
                        row.append(f"{cell.avg_epoch_seconds:.3f}")
            writer.writerow(row)


_CHART_W, _CHART_H = 640, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 24, 48, 56


def _accuracy_chart(step: float, results: list[RunResult]) -> str:
    """Line chart of final validation accuracy against class count.

    Plain hand-assembled SVG so identical results give identical bytes.
    """
    plot_w = _CHART_W - _MARGIN_L - _MARGIN_R
    plot_h = _CHART_H - _MARGIN_T - _MARGIN_B
    counts = [r.class_count for r in results]
    lo = min(counts) if counts else 0
    hi = max(counts) if counts else 1
    span = (hi - lo) or 1

    def sx(count: float) -> float:
        return _MARGIN_L + plot_w * (count - lo) / span

    def sy(acc: float) -> float:
        return _MARGIN_T + plot_h * (1.0 - acc)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CHART_W}" height="{_CHART_H}" '
        f'viewBox="0 0 {_CHART_W} {_CHART_H}">',
        f'<rect width="{_CHART_W}" height="{_CHART_H}" fill="white"/>',
        f'<text x="{_CHART_W / 2:.2f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">Validation accuracy vs class count ({_fmt(step)} degree step)</text>',
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" y2="{_MARGIN_T + plot_h}" stroke="black"/>',
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T + plot_h}" x2="{_MARGIN_L + plot_w}" '
        f'y2="{_MARGIN_T + plot_h}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(f'<line x1="{_MARGIN_L - 4}" y1="{y:.2f}" x2="{_MARGIN_L}" y2="{y:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{_MARGIN_L - 8}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{tick:g}</text>'
        )
    for count in counts:
        x = sx(count)
        parts.append(
            f'<line x1="{x:.2f}" y1="{_MARGIN_T + plot_h}" x2="{x:.2f}" '
            f'y2="{_MARGIN_T + plot_h + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{count}</text>'
        )
    parts.append(
        f'<text x="{_CHART_W / 2:.2f}" y="{_CHART_H - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">classes</text>'
    )
    for name, color, pick in (
        ("top-1", "#1f6fb4", lambda r: r.final.val_top1),
        ("top-5", "#e07b28", lambda r: r.final.val_top5),
    ):
        points = " ".join(f"{sx(r.class_count):.2f},{sy(pick(r)):.2f}" for r in results)
        if len(results) > 1:
            parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        for r in results:
            parts.append(
                f'<circle cx="{sx(r.class_count):.2f}" cy="{sy(pick(r)):.2f}" r="3" fill="{color}"/>'
            )
    parts.append(
        f'<rect x="{_MARGIN_L + 8}" y="{_MARGIN_T + 8}" width="14" height="4" fill="#1f6fb4"/>'
        f'<text x="{_MARGIN_L + 28}" y="{_MARGIN_T + 14}" font-family="sans-serif" font-size="11">top-1</text>'
        f'<rect x="{_MARGIN_L + 8}" y="{_MARGIN_T + 24}" width="14" height="4" fill="#e07b28"/>'
        f'<text x="{_MARGIN_L + 28}" y="{_MARGIN_T + 30}" font-family="sans-serif" font-size="11">top-5</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _fmt(value: float) -> str:
    return f"{value:g}"
