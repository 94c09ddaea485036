"""Exporter tests: wire-format round trips plus a pipeline run on exported files.

The refinement toolkit is exercised only through its external surfaces (the
`pixelgcn` console command and the documented file formats); nothing here
imports it.
"""

import json
import struct
import subprocess
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from segexport import ExportSpec, export, make_checkpoint, read_btf
from segexport.models import build_model, resolve_layers

NUM_CLASSES = 4
DEEPLAB_LAYERS = ("net.backbone.layer1", "net.classifier.0")


def run_cli(*args):
    return subprocess.run([str(a) for a in args], capture_output=True, text=True)


@pytest.fixture(scope="session")
def frames(tmp_path_factory):
    """Two RGB frames plus ground truth, produced by the refinement toolkit's CLI."""
    data_dir = tmp_path_factory.mktemp("frames")
    result = run_cli("pixelgcn", "synth", "--seed", "3", "--out-dir", data_dir,
                     "--set", "data.num_classes=4",
                     "--set", "synth.train_frames=2", "--set", "synth.val_frames=0",
                     "--set", "synth.test_frames=0")
    assert result.returncode == 0, result.stderr
    records = []
    for line in (data_dir / "train.txt").read_text().splitlines():
        frame_id, rgb, base, gt = line.split()
        records.append({"id": frame_id, "rgb": data_dir / rgb, "gt": data_dir / gt})
    assert len(records) == 2
    return records


@pytest.fixture(scope="session")
def deeplab_checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "deeplab.pt"
    make_checkpoint("deeplabv3_resnet50", NUM_CLASSES, seed=1, path=path)
    return path


@pytest.fixture(scope="session")
def exported(frames, deeplab_checkpoint, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("export")
    spec = ExportSpec(model_name="deeplabv3_resnet50", checkpoint=deeplab_checkpoint,
                      num_classes=NUM_CLASSES, layers=DEEPLAB_LAYERS,
                      frames=tuple(r["rgb"] for r in frames), out_dir=out_dir)
    return export(spec), out_dir


class TestWireFormats:
    def test_btf_payloads_round_trip_byte_exact(self, exported):
        results, _ = exported
        assert len(results) == 2
        for frame in results:
            for tensor_path in frame.tensor_files:
                raw = tensor_path.read_bytes()
                assert raw[:4] == b"BTF1"
                rank, c, h, w = struct.unpack("<IIII", raw[4:20])
                assert rank == 3
                payload = np.frombuffer(raw[20:], dtype="<f4")
                assert payload.size == c * h * w
                again = read_btf(tensor_path)
                assert again.shape == (c, h, w)
                assert again.astype("<f4").tobytes() == raw[20:]

    def test_manifest_lines_match_file_headers(self, exported):
        results, out_dir = exported
        for frame in results:
            lines = frame.manifest.read_text().splitlines()
            assert len(lines) == len(DEEPLAB_LAYERS)
            for line in lines:
                name, c, h, w, filename = line.split()
                data = read_btf(out_dir / filename)
                assert data.shape == (int(c), int(h), int(w))

    def test_prediction_png_is_single_channel_class_map(self, exported, frames):
        results, _ = exported
        for frame, record in zip(results, frames):
            with Image.open(frame.prediction_png) as img:
                assert img.mode == "L"
                pred = np.asarray(img)
            with Image.open(record["rgb"]) as img:
                assert pred.shape == (img.height, img.width)
            assert pred.max() < NUM_CLASSES

    def test_prediction_only_export(self, frames, deeplab_checkpoint, tmp_path):
        spec = ExportSpec(model_name="deeplabv3_resnet50", checkpoint=deeplab_checkpoint,
                          num_classes=NUM_CLASSES, layers=(),
                          frames=(frames[0]["rgb"],), out_dir=tmp_path)
        results = export(spec)
        assert results[0].prediction_png.exists()
        assert results[0].manifest.read_text() == ""
        assert results[0].tensor_files == []


class TestDeterminismAndErrors:
    def test_reexport_is_byte_identical(self, frames, deeplab_checkpoint, tmp_path):
        outputs = []
        for sub in ("a", "b"):
            spec = ExportSpec(model_name="deeplabv3_resnet50",
                              checkpoint=deeplab_checkpoint, num_classes=NUM_CLASSES,
                              layers=DEEPLAB_LAYERS, frames=(frames[0]["rgb"],),
                              out_dir=tmp_path / sub)
            export(spec)
            outputs.append({p.name: p.read_bytes()
                            for p in sorted((tmp_path / sub).iterdir())})
        assert outputs[0].keys() == outputs[1].keys()
        for name in outputs[0]:
            assert outputs[0][name] == outputs[1][name], name

    def test_unresolvable_layer_rejected(self, frames, deeplab_checkpoint, tmp_path):
        spec = ExportSpec(model_name="deeplabv3_resnet50", checkpoint=deeplab_checkpoint,
                          num_classes=NUM_CLASSES, layers=("net.no_such_layer",),
                          frames=(frames[0]["rgb"],), out_dir=tmp_path)
        with pytest.raises(ValueError, match="does not resolve"):
            export(spec)

    def test_too_small_frame_rejected(self, deeplab_checkpoint, tmp_path):
        tiny = tmp_path / "tiny.png"
        Image.fromarray(np.zeros((16, 16, 3), dtype=np.uint8)).save(tiny)
        spec = ExportSpec(model_name="deeplabv3_resnet50", checkpoint=deeplab_checkpoint,
                          num_classes=NUM_CLASSES, layers=(), frames=(tiny,),
                          out_dir=tmp_path)
        with pytest.raises(ValueError, match="minimum input"):
            export(spec)


class TestUnet:
    def test_decoder_layers_resolve_and_export(self, frames, tmp_path):
        model = build_model("unet_resnext50", NUM_CLASSES)
        resolved = resolve_layers(model, ["decoder_d3", "decoder_d4", "head"])
        assert set(resolved) == {"decoder_d3", "decoder_d4", "head"}

        checkpoint = tmp_path / "unet.pt"
        make_checkpoint("unet_resnext50", NUM_CLASSES, seed=2, path=checkpoint)
        spec = ExportSpec(model_name="unet_resnext50", checkpoint=checkpoint,
                          num_classes=NUM_CLASSES, layers=("decoder_d3",),
                          frames=(frames[0]["rgb"],), out_dir=tmp_path / "out")
        results = export(spec)
        tensor = read_btf(results[0].tensor_files[0])
        assert tensor.shape[0] == 128  # decoder_d3 channel width


class TestPipelineIntegration:
    def test_refinement_run_on_exported_features(self, frames, exported, tmp_path):
        """Full train/predict/eval through the toolkit CLI on exported files."""
        results, out_dir = exported
        manifest = tmp_path / "frames.txt"
        lines = []
        for frame, record in zip(results, frames):
            lines.append(f"{record['id']} {record['rgb']} {frame.prediction_png} "
                         f"{record['gt']} {frame.manifest}")
        manifest.write_text("\n".join(lines) + "\n")

        feature_names = ",".join(layer.replace(".", "_") for layer in DEEPLAB_LAYERS)
        config = tmp_path / "run.ini"
        config.write_text(
            "[data]\n"
            "num_classes = 4\n"
            f"train_manifest = {manifest}\n"
            f"test_manifest = {manifest}\n"
            "[graph]\nthickness = 1\nk = 4\n"
            f"[features]\nspec = base,I,{feature_names}\n"
            "[gcn]\nhidden_channels = 8\nseed = 1\n"
            "[train]\nepochs = 2\n")

        run = tmp_path / "run"
        train_result = run_cli("pixelgcn", "train", "--config", config, "--out-dir", run)
        assert train_result.returncode == 0, train_result.stderr
        assert (run / "model.bgm").exists()

        preds = tmp_path / "preds"
        predict_result = run_cli("pixelgcn", "predict", "--config", config,
                                 "--checkpoint", run / "model.bgm",
                                 "--manifest", manifest, "--out-dir", preds)
        assert predict_result.returncode == 0, predict_result.stderr

        eval_dir = tmp_path / "eval"
        eval_result = run_cli("pixelgcn", "eval", "--config", config,
                              "--manifest", manifest, "--pred-dir", preds,
                              "--out-dir", eval_dir)
        assert eval_result.returncode == 0, eval_result.stderr
        report = json.loads((eval_dir / "report.json").read_text())
        for key in ("overall", "border", "theoretical_max", "base_overall"):
            assert 0.0 <= report[key]["miou"] <= 1.0
        assert report["overall"]["pixel_count"] > 0
