"""Checkpoint -> portable inference bundle: ONNX graph, model card, parity file.

The exported graph replays the model's forward pass op for op on a single
normalized clip (batch 1, layout THWC) and ends in a two-way softmax with
index 1 = high visual damage. The parity file records probabilities for up
to 100 held-out clips so the consuming pipeline can verify its executor
against the training stack (|dprob| <= 1e-4 expected).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import torch

from .data import ClipExportDataset, load_index, split_by_individual
from .model import ModelConfig, TinyVideoTransformer, sinusoidal_positions
from .onnx_write import GraphBuilder

PARITY_CLIPS = 100


class ExportFailure(RuntimeError):
    pass


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().numpy().astype(np.float32)


def build_graph(model: TinyVideoTransformer, model_id: str) -> GraphBuilder:
    """Mirror the forward pass as an ONNX graph over input [1,16,224,224,3]."""
    cfg = model.cfg
    side = cfg.image_size // cfg.patch
    tokens, d, heads = cfg.tokens, cfg.hidden, cfg.heads
    head_dim = d // heads

    b = GraphBuilder(model_id)
    x = b.add_input("clip", [1, cfg.frames, cfg.image_size, cfg.image_size, cfg.channels])

    # tokenize: reshape -> transpose -> flatten tubelets
    x = b.reshape(
        x, [1, cfg.frames // cfg.tubelet_t, cfg.tubelet_t, side, cfg.patch, side,
            cfg.patch, cfg.channels]
    )
    x = b.transpose(x, [0, 1, 3, 5, 2, 4, 6, 7])
    x = b.reshape(x, [1, tokens, cfg.tubelet_dim])

    w_embed = b.init("embed_w", _np(model.embed.weight).T)
    b_embed = b.init("embed_b", _np(model.embed.bias))
    x = b.add(b.matmul(x, w_embed), b_embed)
    pos = b.init("pos", sinusoidal_positions(tokens, d)[None, :, :])
    x = b.add(x, pos)

    for i, block in enumerate(model.blocks):
        g1 = b.init(f"ln1_g{i}", _np(block.ln1.weight))
        bb1 = b.init(f"ln1_b{i}", _np(block.ln1.bias))
        h = b.layer_norm(x, g1, bb1)

        heads_qkv = []
        for name, linear in (("q", block.q), ("k", block.k), ("v", block.v)):
            w = b.init(f"{name}_w{i}", _np(linear.weight).T)
            bias = b.init(f"{name}_b{i}", _np(linear.bias))
            proj = b.add(b.matmul(h, w), bias)
            proj = b.reshape(proj, [1, tokens, heads, head_dim])
            proj = b.transpose(proj, [0, 2, 1, 3])
            heads_qkv.append(proj)
        q, k, v = heads_qkv

        k_t = b.transpose(k, [0, 1, 3, 2])
        scale = b.init(f"scale{i}", np.float32(1.0 / math.sqrt(head_dim)))
        scores = b.mul(b.matmul(q, k_t), scale)
        attn = b.softmax(scores, axis=-1)
        ctx = b.matmul(attn, v)
        ctx = b.transpose(ctx, [0, 2, 1, 3])
        ctx = b.reshape(ctx, [1, tokens, d])
        w_proj = b.init(f"proj_w{i}", _np(block.proj.weight).T)
        b_proj = b.init(f"proj_b{i}", _np(block.proj.bias))
        x = b.add(x, b.add(b.matmul(ctx, w_proj), b_proj))

        g2 = b.init(f"ln2_g{i}", _np(block.ln2.weight))
        bb2 = b.init(f"ln2_b{i}", _np(block.ln2.bias))
        h = b.layer_norm(x, g2, bb2)
        w1 = b.init(f"fc1_w{i}", _np(block.fc1.weight).T)
        b1 = b.init(f"fc1_b{i}", _np(block.fc1.bias))
        w2 = b.init(f"fc2_w{i}", _np(block.fc2.weight).T)
        b2 = b.init(f"fc2_b{i}", _np(block.fc2.bias))
        m = b.gelu(b.add(b.matmul(h, w1), b1))
        x = b.add(x, b.add(b.matmul(m, w2), b2))

    gf = b.init("lnf_g", _np(model.final_ln.weight))
    bf = b.init("lnf_b", _np(model.final_ln.bias))
    x = b.layer_norm(x, gf, bf)
    pooled = b.reduce_mean(x, axes=[1], keepdims=0)
    w_head = b.init("head_w", _np(model.head.weight).T)
    b_head = b.init("head_b", _np(model.head.bias))
    logits = b.add(b.matmul(pooled, w_head), b_head)
    probs = b.softmax(logits, axis=-1)
    b.mark_output(probs, [1, 2])
    return b


def load_checkpoint(path: str | Path) -> tuple[TinyVideoTransformer, dict]:
    path = Path(path)
    if not path.is_file():
        raise ExportFailure(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = TinyVideoTransformer(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def export_model(
    checkpoint_path: str | Path,
    export_dir: str | Path,
    out_dir: str | Path,
    model_id: str = "vmae-toy",
) -> Path:
    """Write model.onnx + model.card + parity.jsonl; returns the card path.

    Parity clips come from the held-out split of the same export the model
    was trained on (same seed, so no leakage into its train half).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, payload = load_checkpoint(checkpoint_path)
    mean = tuple(payload["mean"])
    std = tuple(payload["std"])

    graph = build_graph(model, model_id)
    graph.save(out_dir / "model.onnx")

    card = out_dir / "model.card"
    card.write_text(
        "\n".join(
            [
                f"model_id = {model_id}",
                "kind = ExternalGraph",
                f"mean = {', '.join(f'{v:.10g}' for v in mean)}",
                f"std = {', '.join(f'{v:.10g}' for v in std)}",
                "input_layout = THWC",
                "class_order = LowVD, HighVD",
                "artifact = model.onnx",
            ]
        )
        + "\n",
        "utf-8",
    )

    records = load_index(export_dir)
    _, held_out = split_by_individual(records, seed=payload["seed"])
    if not held_out:
        held_out = records
    held_out = held_out[:PARITY_CLIPS]
    dataset = ClipExportDataset(export_dir, held_out, mean, std)
    with open(out_dir / "parity.jsonl", "w", encoding="utf-8") as fh:
        with torch.no_grad():
            for i, rec in enumerate(held_out):
                x, _ = dataset[i]
                prob_high = float(model.probs(x[None])[0, 1])
                fh.write(
                    json.dumps(
                        {
                            "file": rec["file"],
                            "video_id": rec["video_id"],
                            "label": int(rec["label"]),
                            "prob_high_vd": round(prob_high, 9),
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    return card


def reverify_parity(
    checkpoint_path: str | Path, export_dir: str | Path, parity_path: str | Path
) -> float:
    """Re-run the checkpoint over the parity clips; returns max |dprob|."""
    model, payload = load_checkpoint(checkpoint_path)
    records = [
        json.loads(l)
        for l in Path(parity_path).read_text("utf-8").splitlines()
        if l.strip()
    ]
    dataset = ClipExportDataset(
        export_dir, records, tuple(payload["mean"]), tuple(payload["std"])
    )
    worst = 0.0
    with torch.no_grad():
        for i, rec in enumerate(records):
            x, _ = dataset[i]
            prob = float(model.probs(x[None])[0, 1])
            worst = max(worst, abs(prob - rec["prob_high_vd"]))
    return worst
