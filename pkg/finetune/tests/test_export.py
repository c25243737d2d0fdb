"""Export bundle: graph + card + parity, checked against the consuming pipeline."""

import json

import numpy as np
import pytest
import torch

from finetune_harness.data import ClipExportDataset, load_index
from finetune_harness.export import (
    ExportFailure,
    build_graph,
    export_model,
    load_checkpoint,
    reverify_parity,
)
from finetune_harness.model import TinyVideoTransformer
from finetune_harness.train import TrainConfig, finetune


@pytest.fixture(scope="module")
def bundle(small_export, tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    cfg = TrainConfig(epochs=16, seed=0)
    result = finetune(small_export, out, cfg)
    card = export_model(result.checkpoint_path, small_export, out, model_id="toy-x")
    return small_export, out, card, cfg, result


def test_card_echoes_training_stats(bundle):
    _, out, card, cfg, _ = bundle
    entries = dict(
        line.split(" = ", 1) for line in card.read_text().splitlines() if " = " in line
    )
    assert entries["model_id"] == "toy-x"
    assert entries["kind"] == "ExternalGraph"
    assert entries["input_layout"] == "THWC"
    assert entries["class_order"] == "LowVD, HighVD"
    assert tuple(float(v) for v in entries["mean"].split(",")) == cfg.mean
    assert tuple(float(v) for v in entries["std"].split(",")) == cfg.std
    assert (out / "model.onnx").stat().st_size > 100_000


def test_parity_file_reproduces_in_harness(bundle):
    export_dir, out, _, _, result = bundle
    worst = reverify_parity(result.checkpoint_path, export_dir, out / "parity.jsonl")
    assert worst <= 1e-4


def test_parity_covers_held_out_clips(bundle):
    export_dir, out, _, _, _ = bundle
    records = [json.loads(l) for l in (out / "parity.jsonl").read_text().splitlines()]
    assert 0 < len(records) <= 100
    train_like = {r["file"] for r in records}
    assert len(train_like) == len(records)  # no duplicates


def test_missing_checkpoint(tmp_path, small_export):
    with pytest.raises(ExportFailure):
        export_model(tmp_path / "ghost.pt", small_export, tmp_path)


def test_graph_matches_torch_forward(small_export):
    # random-init model: the exported graph must replay forward exactly
    from carovd.onnxgraph import load_graph, run_graph

    torch.manual_seed(5)
    model = TinyVideoTransformer()
    model.eval()
    x = torch.rand(1, 16, 224, 224, 3)
    with torch.no_grad():
        ref = model.probs(x).numpy()
    graph_bytes = build_graph(model, "roundtrip").serialize()
    import tempfile

    with tempfile.NamedTemporaryFile(suffix=".onnx") as fh:
        fh.write(graph_bytes)
        fh.flush()
        graph = load_graph(fh.name)
        got = run_graph(graph, {"clip": x.numpy().astype(np.float32)})[graph.outputs[0]]
    assert np.abs(ref - got).max() <= 1e-5


class TestClassifierCoreParity:
    """The bridge contract: classifier-core must reproduce recorded probs."""

    def test_parity_against_pipeline_executor(self, bundle):
        from carovd.classify import load_model, predict_clip
        from carovd.sampling import ClipIndexPlan, ClipTensor, load_exported_clip, normalize

        export_dir, out, card, _, _ = bundle
        handle = load_model(card)
        records = [json.loads(l) for l in (out / "parity.jsonl").read_text().splitlines()]
        assert records

        agree = 0
        worst = 0.0
        for rec in records:
            data = load_exported_clip(export_dir / rec["file"])
            plan = ClipIndexPlan(
                video_id=rec["video_id"],
                start_frame=0,
                frame_indices=tuple(range(16)),
                seed=0,
            )
            clip = normalize(
                ClipTensor(data=data, normalized=False, plan=plan), handle.norm_stats
            )
            pred = predict_clip(handle, clip)
            delta = abs(pred.prob_high_vd - rec["prob_high_vd"])
            worst = max(worst, delta)
            recorded_label = rec["prob_high_vd"] >= 0.5
            agree += int((pred.prob_high_vd >= 0.5) == recorded_label)
        assert worst <= 1e-4, f"max prob delta {worst}"
        assert agree / len(records) >= 0.99

    def test_class_order_sanity_on_positive_batch(self, bundle):
        # planted all-positive batch: index 1 must carry the high-VD class
        from carovd.classify import Label, load_model, predict_clip
        from carovd.sampling import ClipIndexPlan, ClipTensor, load_exported_clip, normalize

        export_dir, _, card, _, _ = bundle
        handle = load_model(card)
        positives = [r for r in load_index(export_dir) if r["label"] == 1][:10]
        hits = 0
        for rec in positives:
            data = load_exported_clip(export_dir / rec["file"])
            plan = ClipIndexPlan(
                video_id=rec["video_id"], start_frame=0,
                frame_indices=tuple(range(16)), seed=0,
            )
            clip = normalize(
                ClipTensor(data=data, normalized=False, plan=plan), handle.norm_stats
            )
            hits += int(predict_clip(handle, clip).label is Label.HIGH_VD)
        assert hits >= 9
