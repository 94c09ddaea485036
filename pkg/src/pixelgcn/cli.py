"""Command-line surface: every pipeline stage plus the ablation sweeps.

Exit codes: 0 success, 2 configuration error, 4 numerical divergence and 3
for any other data problem.  Failures print a single machine-parsable line
to stderr and remove whatever artifacts the failing command had created.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from PIL import Image

from .borders import compute_border_mask
from .config import ConfigError, Settings, build_settings
from .features import FeatureTensor, assemble, load_extras, save_tensor
from .frames import LabelMap, load_label_png, load_rgb_png, save_label_png
from .gcn import DivergenceError, load_checkpoint, save_checkpoint
from .graph import build_graph, save_graph
from .metrics import ConfusionMatrix, IoUReport, accumulate, miou, theoretical_max
from .pipeline import (FrameRecord, predict_merge, read_dataset_manifest, train,
                       write_training_log)
from .synth import generate_dataset

ABLATION_GRIDS = {
    "connections": [2, 4, 8, 16],
    "thickness": [1, 2, 3, 4, 5, 6],
    "dropout": [0.0, 1e-4, 1e-3, 0.1, 0.5, 0.9],
    "l2": [1e-1, 1e-4, 1e-8, 1e-11, 1e-13],
}


class _ArtifactSink:
    """Tracks artifacts written by one command so failures leave nothing behind."""

    def __init__(self):
        self.files: list[Path] = []
        self.dirs: list[Path] = []

    def file(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(path)
        return path

    def directory(self, path: Path) -> Path:
        if not path.exists():
            self.dirs.append(path)
            path.mkdir(parents=True)
        return path

    def discard(self) -> None:
        for path in self.files:
            path.unlink(missing_ok=True)
        for path in reversed(self.dirs):
            shutil.rmtree(path, ignore_errors=True)


def _infer_num_classes(path: str | Path) -> int:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return max(int(arr.max()) + 1, 2)


def _label_map(path: str | Path, settings: Settings) -> LabelMap:
    num_classes = settings.num_classes or _infer_num_classes(path)
    return load_label_png(path, num_classes, settings.pipeline.void_label)


def _require(value, message: str):
    if value is None:
        raise ConfigError(message)
    return value


def cmd_mask(args, settings: Settings, sink: _ArtifactSink) -> None:
    pred = _label_map(args.pred, settings)
    thickness = settings.pipeline.thickness
    mask = compute_border_mask(pred, thickness)
    out = sink.file(Path(args.out_dir) / f"{Path(args.pred).stem}_mask_t{thickness}.png")
    Image.fromarray(mask.selected.astype(np.uint8) * 255, mode="L").save(out)
    print(f"mask file={out} pixels={mask.selected.size} selected={mask.num_selected}")


def cmd_graph(args, settings: Settings, sink: _ArtifactSink) -> None:
    frame = load_rgb_png(args.frame)
    pred = _label_map(args.pred, settings)
    mask = compute_border_mask(pred, settings.pipeline.thickness)
    graph = build_graph(mask, frame, settings.pipeline.k)
    out = sink.file(Path(args.out_dir) / f"{Path(args.frame).stem}_graph.bgg")
    save_graph(graph, out)
    print(f"graph file={out} nodes={graph.num_nodes} selected={mask.num_selected} "
          f"edges={graph.num_edges}")


def cmd_features(args, settings: Settings, sink: _ArtifactSink) -> None:
    frame = load_rgb_png(args.frame)
    pred = _label_map(args.pred, settings)
    extras = load_extras(args.extras) if args.extras else []
    matrix = assemble(frame, pred, extras, settings.pipeline.features)
    stacked = matrix.data.T.reshape(matrix.num_features, frame.height, frame.width)
    out = sink.file(Path(args.out_dir) / f"{Path(args.frame).stem}_features.btf")
    save_tensor(FeatureTensor("features", stacked), out)
    spans = ",".join(f"{name}:{start}-{stop}" for name, start, stop in matrix.manifest)
    print(f"features file={out} count={matrix.num_features} spans={spans}")


def cmd_synth(args, settings: Settings, sink: _ArtifactSink) -> None:
    out_dir = sink.directory(Path(args.out_dir))
    records = generate_dataset(settings.synth, out_dir, settings.synth_splits)
    counts = " ".join(f"{split}={len(recs)}" for split, recs in records.items())
    print(f"synth dir={out_dir} {counts}")


def cmd_train(args, settings: Settings, sink: _ArtifactSink) -> None:
    _require(settings.num_classes, "training requires data.num_classes")
    manifest = _require(settings.train_manifest, "training requires data.train_manifest")
    records = read_dataset_manifest(manifest)
    val = read_dataset_manifest(settings.val_manifest) if settings.val_manifest else []
    result = train(records, val, settings.pipeline)
    model_path = sink.file(Path(args.out_dir) / "model.bgm")
    log_path = sink.file(Path(args.out_dir) / "training_log.csv")
    save_checkpoint(result.model, model_path)
    write_training_log(result.log, log_path)
    best = "" if result.best_val_miou is None else f" best_val_miou={result.best_val_miou!r}"
    print(f"train model={model_path} log={log_path} steps={result.model.step}{best}")


def cmd_predict(args, settings: Settings, sink: _ArtifactSink) -> None:
    _require(settings.num_classes, "prediction requires data.num_classes")
    model = load_checkpoint(args.checkpoint)
    records = read_dataset_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    for record in records:
        merged = predict_merge(model, record, settings.pipeline)
        save_label_png(merged, sink.file(out_dir / f"{record.frame_id}_merged.png"))
    print(f"predict frames={len(records)} dir={out_dir}")


def _find_prediction(pred_dir: Path, frame_id: str) -> Path:
    for candidate in (pred_dir / f"{frame_id}_merged.png", pred_dir / f"{frame_id}.png"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no prediction for frame '{frame_id}' in {pred_dir}")


def _evaluate_records(records: list[FrameRecord], settings: Settings,
                      merged_maps: dict[str, LabelMap]) -> dict:
    """Overall/border/upper-bound reports for merged maps plus the base reference."""
    num_classes = settings.num_classes
    thickness = settings.pipeline.thickness
    cms = {key: ConfusionMatrix(num_classes)
           for key in ("overall", "border", "theoretical_max", "theoretical_max_border",
                       "base_overall", "base_border")}
    for record in records:
        gt = load_label_png(record.gt_path, num_classes, settings.pipeline.void_label)
        base = load_label_png(record.base_path, num_classes, settings.pipeline.void_label)
        merged = merged_maps[record.frame_id]
        mask = compute_border_mask(base, thickness)
        upper = LabelMap(np.where(mask.selected, gt.labels, base.labels),
                         num_classes=gt.num_classes, void_label=gt.void_label)
        accumulate(cms["overall"], merged, gt)
        accumulate(cms["border"], merged, gt, mask)
        theoretical_max(base, gt, mask, cm=cms["theoretical_max"])
        accumulate(cms["theoretical_max_border"], upper, gt, mask)
        accumulate(cms["base_overall"], base, gt)
        accumulate(cms["base_border"], base, gt, mask)
    return {key: miou(cm) for key, cm in cms.items()}


def _report_json(reports: dict[str, IoUReport]) -> str:
    payload = {key: {"miou": rep.miou,
                     "per_class_iou": list(rep.per_class),
                     "pixel_count": rep.pixel_count}
               for key, rep in reports.items()}
    return json.dumps(payload, indent=2)


def cmd_eval(args, settings: Settings, sink: _ArtifactSink) -> None:
    _require(settings.num_classes, "evaluation requires data.num_classes")
    records = read_dataset_manifest(args.manifest)
    pred_dir = Path(args.pred_dir)
    merged = {r.frame_id: load_label_png(_find_prediction(pred_dir, r.frame_id),
                                         settings.num_classes, settings.pipeline.void_label)
              for r in records}
    reports = _evaluate_records(records, settings, merged)
    out = sink.file(Path(args.out_dir) / "report.json")
    out.write_text(_report_json(reports) + "\n")
    print(f"eval report={out} miou={reports['overall'].miou!r} "
          f"border={reports['border'].miou!r} "
          f"theoretical_max={reports['theoretical_max'].miou!r}")


def _sweep_value(settings: Settings, axis: str, value) -> Settings:
    pipeline = settings.pipeline
    if axis == "connections":
        pipeline = replace(pipeline, k=int(value))
    elif axis == "thickness":
        pipeline = replace(pipeline, thickness=int(value))
    elif axis == "dropout":
        pipeline = replace(pipeline, gcn=replace(pipeline.gcn, dropout_rate=float(value)))
    elif axis == "l2":
        pipeline = replace(pipeline, gcn=replace(pipeline.gcn, l2_coeff=float(value)))
    else:
        raise ConfigError(f"unknown ablation axis '{axis}'")
    return replace(settings, pipeline=pipeline)


def run_sweep_point(settings: Settings) -> float:
    """One train + merged-test-mIoU evaluation; the unit an ablation row reports.

    Identical to running the train and eval subcommands with the same seed:
    merged predictions are integer label maps, so skipping the PNG round-trip
    changes nothing.
    """
    records = read_dataset_manifest(_require(settings.train_manifest,
                                             "ablation requires data.train_manifest"))
    val = read_dataset_manifest(settings.val_manifest) if settings.val_manifest else []
    test = read_dataset_manifest(_require(settings.test_manifest,
                                          "ablation requires data.test_manifest"))
    result = train(records, val, settings.pipeline)
    merged = {r.frame_id: predict_merge(result.model, r, settings.pipeline) for r in test}
    reports = _evaluate_records(test, settings, merged)
    return reports["overall"].miou


def cmd_ablate(args, settings: Settings, sink: _ArtifactSink) -> None:
    _require(settings.num_classes, "ablation requires data.num_classes")
    axis = args.axis
    if axis not in ABLATION_GRIDS:
        raise ConfigError(f"unknown ablation axis '{axis}' "
                          f"(choose from {sorted(ABLATION_GRIDS)})")
    out = sink.file(Path(args.out_dir) / f"ablation_{axis}.csv")
    rows = []
    for value in ABLATION_GRIDS[axis]:
        score = run_sweep_point(_sweep_value(settings, axis, value))
        rows.append(f"{value!r},{score!r}")
        print(f"ablate axis={axis} value={value!r} miou={score!r}")
    out.write_text("value,miou\n" + "\n".join(rows) + "\n")
    print(f"ablate file={out} rows={len(rows)}")


_HANDLERS = {
    "mask": cmd_mask,
    "graph": cmd_graph,
    "features": cmd_features,
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pixelgcn",
        description="Refine segmentation borders with a GCN over weighted pixel graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value")
        p.add_argument("--seed", type=int)
        p.add_argument("--thickness", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--features", help="comma-separated feature names")
        p.add_argument("--dropout", type=float)
        p.add_argument("--l2", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--out-dir", default=".")

    p = sub.add_parser("mask", help="write the border mask of a label PNG")
    common(p)
    p.add_argument("--pred", required=True, help="base prediction label PNG")

    p = sub.add_parser("graph", help="build and dump the pixel graph of one frame")
    common(p)
    p.add_argument("--frame", required=True, help="RGB PNG")
    p.add_argument("--pred", required=True, help="base prediction label PNG")

    p = sub.add_parser("features", help="assemble and dump the feature matrix of one frame")
    common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--extras", help="sidecar tensor manifest")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)

    p = sub.add_parser("train", help="train the border classifier")
    common(p)

    p = sub.add_parser("predict", help="write merged predictions for a manifest")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("eval", help="evaluate merged predictions")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True)

    p = sub.add_parser("ablate", help="sweep one hyperparameter axis")
    common(p)
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_GRIDS))

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sink = _ArtifactSink()
    try:
        settings = build_settings(args.config, args.set, vars(args))
        _HANDLERS[args.command](args, settings, sink)
        return 0
    except ConfigError as exc:
        code, message = 2, str(exc)
    except DivergenceError as exc:
        code, message = 4, str(exc)
    except Exception as exc:  # data or I/O problem
        code, message = 3, f"{type(exc).__name__}: {exc}"
    sink.discard()
    print(f'error code={code} msg="{message}"'.replace("\n", " "), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
