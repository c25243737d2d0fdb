"""Clip scoring and label aggregation: clip -> video -> individual.

Class convention, pipeline-wide: index 1 = HighVD (model-predicted
hypertensive). Thresholds use `>= 0.5 -> HighVD` at every level; even-split
votes fall back to the mean probability.

Two model kinds sit behind one predict call: a built-in logistic baseline
over pooled clip features (so the pipeline tests end-to-end with no
external artifacts), and external inference graphs described by a model
card.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    EmptyPredictionSet,
    EmptySet,
    MixedVideoIds,
    ModelLoadError,
    NotNormalized,
    ShapeMismatch,
    SingleClassDataset,
)
from .sampling import ClipIndexPlan, ClipTensor, NormStats

PROB_THRESHOLD = 0.5


class Label(Enum):
    LOW_VD = "LowVD"
    HIGH_VD = "HighVD"


class ModelKind(Enum):
    BUILTIN_LINEAR = "BuiltinLinear"
    EXTERNAL_GRAPH = "ExternalGraph"


class AggregationPolicy(Enum):
    MAJORITY = "majority"
    MEAN_PROB = "mean_prob"


def label_from_prob(prob_high: float) -> Label:
    return Label.HIGH_VD if prob_high >= PROB_THRESHOLD else Label.LOW_VD


@dataclass(frozen=True)
class ClipPrediction:
    plan: ClipIndexPlan
    prob_high_vd: float
    label: Label
    model_id: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.prob_high_vd <= 1.0:
            raise ValueError(f"prob_high_vd {self.prob_high_vd} outside [0, 1]")
        if self.label is not label_from_prob(self.prob_high_vd):
            raise ValueError(
                f"label {self.label.value} contradicts prob {self.prob_high_vd}"
            )


@dataclass(frozen=True)
class VideoPrediction:
    video_id: str
    n_clips: int
    votes_high: int
    mean_prob: float
    label: Label


@dataclass(frozen=True)
class IndividualPrediction:
    individual_id: str
    n_videos: int
    mean_prob: float
    label: Label


@dataclass
class ModelHandle:
    model_id: str
    kind: ModelKind
    norm_stats: NormStats
    artifact_path: Path | None
    payload: object  # builtin weight dict or (OnnxGraph, layout, high_index)


# --- built-in linear baseline ----------------------------------------------

N_FEATURES = 12


def clip_features(data: np.ndarray) -> np.ndarray:
    """Pooled 12-vector: per-channel mean, std, spatial-gradient mean,
    temporal-difference mean."""
    x = data.astype(np.float64)
    mean = x.mean(axis=(0, 1, 2))
    std = x.std(axis=(0, 1, 2))
    grad_h = np.abs(np.diff(x, axis=1)).mean(axis=(0, 1, 2))
    grad_w = np.abs(np.diff(x, axis=2)).mean(axis=(0, 1, 2))
    spatial = (grad_h + grad_w) / 2.0
    temporal = np.abs(np.diff(x, axis=0)).mean(axis=(0, 1, 2))
    return np.concatenate([mean, std, spatial, temporal])


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def train_builtin(
    clips: list[tuple[ClipTensor, int]],
    epochs: int = 400,
    lr: float = 1.0,
    seed: int = 0,
    model_id: str | None = None,
    norm_stats: NormStats | None = None,
) -> ModelHandle:
    """Logistic regression on pooled clip features, full-batch gradient descent.

    Deterministic for a given seed. Clips must already be normalized; the
    stats used go on the handle so inference normalizes identically.
    """
    if not clips:
        raise SingleClassDataset("no training clips")
    labels = np.array([lbl for _, lbl in clips], dtype=np.float64)
    if labels.min() == labels.max():
        raise SingleClassDataset("both classes required to train")
    for clip, _ in clips:
        if not clip.normalized:
            raise NotNormalized("training clips must be normalized")

    x = np.stack([clip_features(c.data) for c, _ in clips])
    feat_mean = x.mean(axis=0)
    feat_std = np.maximum(x.std(axis=0), 1e-12)
    xs = (x - feat_mean) / feat_std

    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, size=N_FEATURES)
    b = 0.0
    n = len(labels)
    for _ in range(epochs):
        p = _sigmoid(xs @ w + b)
        err = p - labels
        w -= lr * (xs.T @ err) / n
        b -= lr * float(err.mean())

    payload = {
        "weights": w.tolist(),
        "bias": b,
        "feature_mean": feat_mean.tolist(),
        "feature_std": feat_std.tolist(),
    }
    return ModelHandle(
        model_id=model_id or f"builtin-seed{seed}",
        kind=ModelKind.BUILTIN_LINEAR,
        norm_stats=norm_stats or NormStats((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
        artifact_path=None,
        payload=payload,
    )


# --- model card IO ----------------------------------------------------------

def _parse_floats(raw: str, n: int, key: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != n:
        raise ModelLoadError(f"model card {key} needs {n} values, got {len(parts)}")
    return tuple(float(p) for p in parts)


def save_model(handle: ModelHandle, out_dir: str | Path) -> Path:
    """Write artifact + model card; returns the card path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if handle.kind is ModelKind.BUILTIN_LINEAR:
        artifact = "model.json"
        (out_dir / artifact).write_text(
            json.dumps(handle.payload, sort_keys=True, indent=2) + "\n", "utf-8"
        )
        layout = "THWC"
    else:
        raise ModelLoadError("only builtin models are saved by the pipeline")
    card = out_dir / "model.card"
    stats = handle.norm_stats
    card.write_text(
        "\n".join(
            [
                f"model_id = {handle.model_id}",
                f"kind = {handle.kind.value}",
                f"mean = {', '.join(f'{v:.10g}' for v in stats.mean)}",
                f"std = {', '.join(f'{v:.10g}' for v in stats.std)}",
                f"input_layout = {layout}",
                "class_order = LowVD, HighVD",
                f"artifact = {artifact}",
            ]
        )
        + "\n",
        "utf-8",
    )
    return card


def load_model(card_path: str | Path) -> ModelHandle:
    """Load a ModelHandle from its card (either kind)."""
    card_path = Path(card_path)
    if not card_path.is_file():
        raise ModelLoadError(f"model card not found: {card_path}")
    entries: dict[str, str] = {}
    for line in card_path.read_text("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ModelLoadError(f"{card_path}: bad card line {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()

    for required in ("model_id", "kind", "mean", "std", "class_order", "artifact"):
        if required not in entries:
            raise ModelLoadError(f"{card_path}: missing {required}")
    try:
        kind = ModelKind(entries["kind"])
    except ValueError as exc:
        raise ModelLoadError(f"{card_path}: unknown kind {entries['kind']!r}") from exc
    stats = NormStats(
        _parse_floats(entries["mean"], 3, "mean"), _parse_floats(entries["std"], 3, "std")
    )
    class_order = [c.strip() for c in entries["class_order"].split(",")]
    if sorted(class_order) != ["HighVD", "LowVD"]:
        raise ModelLoadError(f"{card_path}: class_order must name LowVD and HighVD")
    artifact = card_path.parent / entries["artifact"]
    if not artifact.is_file():
        raise ModelLoadError(f"artifact not found: {artifact}")

    if kind is ModelKind.BUILTIN_LINEAR:
        payload = json.loads(artifact.read_text("utf-8"))
        for key in ("weights", "bias", "feature_mean", "feature_std"):
            if key not in payload:
                raise ModelLoadError(f"{artifact}: missing {key}")
        return ModelHandle(entries["model_id"], kind, stats, artifact, payload)

    layout = entries.get("input_layout", "THWC").upper()
    if layout not in ("THWC", "CTHW"):
        raise ModelLoadError(f"{card_path}: input_layout must be THWC or CTHW")
    from .onnxgraph import load_graph

    graph = load_graph(artifact)
    if not graph.inputs or not graph.outputs:
        raise ModelLoadError(f"{artifact}: graph must declare one input and output")
    high_index = class_order.index("HighVD")
    return ModelHandle(entries["model_id"], kind, stats, artifact, (graph, layout, high_index))


# --- prediction --------------------------------------------------------------

def predict_clip(handle: ModelHandle, clip: ClipTensor) -> ClipPrediction:
    """Score one normalized clip; deterministic for a fixed artifact."""
    if not clip.normalized:
        raise NotNormalized(f"clip for {clip.plan.video_id} is not normalized")

    if handle.kind is ModelKind.BUILTIN_LINEAR:
        p = handle.payload
        feats = clip_features(clip.data)
        xs = (feats - np.asarray(p["feature_mean"])) / np.asarray(p["feature_std"])
        prob = float(_sigmoid(xs @ np.asarray(p["weights"]) + p["bias"]))
    else:
        from .onnxgraph import run_graph

        graph, layout, high_index = handle.payload
        data = clip.data.astype(np.float32)
        if layout == "CTHW":
            data = np.transpose(data, (3, 0, 1, 2))
        feed = data[None, ...]
        input_name = graph.inputs[0][0]
        declared = graph.inputs[0][1]
        if declared and len(declared) != feed.ndim:
            raise ShapeMismatch(
                f"graph expects rank {len(declared)}, clip feed has rank {feed.ndim}"
            )
        out = run_graph(graph, {input_name: feed})[graph.outputs[0]]
        flat = np.asarray(out, dtype=np.float64).reshape(-1)
        if flat.size == 2:
            prob = float(flat[high_index])
        elif flat.size == 1:
            prob = float(flat[0]) if high_index == 1 else 1.0 - float(flat[0])
        else:
            raise ShapeMismatch(f"graph output has {flat.size} values, expected 1 or 2")
        prob = min(max(prob, 0.0), 1.0)

    return ClipPrediction(
        plan=clip.plan,
        prob_high_vd=prob,
        label=label_from_prob(prob),
        model_id=handle.model_id,
    )


def vote_video(preds: list[ClipPrediction]) -> VideoPrediction:
    """Majority vote over clip labels; even splits fall back to mean prob."""
    if not preds:
        raise EmptyPredictionSet("no clip predictions to vote on")
    video_ids = {p.plan.video_id for p in preds}
    if len(video_ids) != 1:
        raise MixedVideoIds(f"one video expected, got {sorted(video_ids)}")
    n = len(preds)
    votes_high = sum(1 for p in preds if p.label is Label.HIGH_VD)
    # fsum keeps the mean exactly permutation-invariant
    mean_prob = math.fsum(p.prob_high_vd for p in preds) / n
    if votes_high * 2 > n:
        label = Label.HIGH_VD
    elif votes_high * 2 < n:
        label = Label.LOW_VD
    else:
        label = label_from_prob(mean_prob)
    return VideoPrediction(
        video_id=video_ids.pop(),
        n_clips=n,
        votes_high=votes_high,
        mean_prob=mean_prob,
        label=label,
    )


def aggregate_individual(
    videos: list[VideoPrediction],
    individual_id: str,
    policy: AggregationPolicy = AggregationPolicy.MAJORITY,
) -> IndividualPrediction:
    """Fold video labels into one individual-level call.

    MAJORITY: majority of video labels, ties by mean of video mean_probs.
    MEAN_PROB: threshold the mean of video mean_probs directly.
    """
    if not videos:
        raise EmptySet(f"no video predictions for {individual_id}")
    n = len(videos)
    mean_prob = math.fsum(v.mean_prob for v in videos) / n
    if policy is AggregationPolicy.MEAN_PROB:
        label = label_from_prob(mean_prob)
    else:
        votes_high = sum(1 for v in videos if v.label is Label.HIGH_VD)
        if votes_high * 2 > n:
            label = Label.HIGH_VD
        elif votes_high * 2 < n:
            label = Label.LOW_VD
        else:
            label = label_from_prob(mean_prob)
    return IndividualPrediction(
        individual_id=individual_id, n_videos=n, mean_prob=mean_prob, label=label
    )


# --- prediction dump (contract consumed by cohort stats) --------------------

def write_prediction_dump(
    path: str | Path,
    preds: list[ClipPrediction],
    individual_of_video: dict[str, str],
) -> Path:
    """One JSON record per clip, sorted by (video, clip order) for stable bytes."""
    path = Path(path)
    counters: dict[str, int] = {}
    records = []
    for p in preds:
        k = counters.get(p.plan.video_id, 0)
        counters[p.plan.video_id] = k + 1
        records.append(
            {
                "clip_id": f"{p.plan.video_id}#{k:03d}",
                "video_id": p.plan.video_id,
                "individual_id": individual_of_video[p.plan.video_id],
                "prob_high_vd": round(p.prob_high_vd, 9),
                "label": p.label.value,
            }
        )
    records.sort(key=lambda r: r["clip_id"])
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_prediction_dump(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text("utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records
