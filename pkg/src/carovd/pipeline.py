"""Batch drivers behind the CLI subcommands.

Each stage communicates through files and is deterministic for a given
seed: worker count changes wall time, never output bytes. Workers handle
whole videos; the parent collects results and writes logs in sorted order.
Per-file failures are recorded in the manifest and never abort a batch.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classify import (
    AggregationPolicy,
    ClipPrediction,
    Label,
    aggregate_individual,
    label_from_prob,
    load_model,
    predict_clip,
    read_prediction_dump,
    vote_video,
    write_prediction_dump,
)
from .errors import IdMismatch
from .manifest import ManifestEntry, RunManifest, content_hash, read_manifest, run_id_for
from .media.ingest import load_video, probe_metadata
from .media.types import ColorMode, FrameVolume, Site, VideoMeta
from .preprocess import Excluded, PreprocessConfig, preprocess_video
from .report import EvaluationReport, write_report
from .sampling import export_clips, extract_clip, load_exported_clip, normalize, plan_clips
from .stats import (
    IndividualRecord,
    alignment_by_age,
    confusion,
    event_table,
    is_aligned,
    read_cohort_table,
    stratify,
)
from .synth import SynthCohortSpec, gen_cohort, write_corpus


def discover_inputs(in_dir: str | Path) -> list[Path]:
    """Video inputs under a directory: .dcm files and frame-sequence dirs."""
    in_dir = Path(in_dir)
    found = []
    for child in sorted(in_dir.iterdir()):
        if child.is_file() and child.suffix.lower() == ".dcm":
            found.append(child)
        elif child.is_dir() and (child / "manifest").is_file():
            found.append(child)
    return found


def _video_seed(seed: int, video_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{video_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _meta_to_dict(meta: VideoMeta) -> dict:
    return {
        "video_id": meta.video_id,
        "individual_id": meta.individual_id,
        "site": meta.site.value,
        "fps": meta.fps,
        "frame_count": meta.frame_count,
        "width": meta.width,
        "height": meta.height,
        "color": meta.color.value,
    }


def _meta_from_dict(d: dict) -> VideoMeta:
    return VideoMeta(
        video_id=d["video_id"],
        individual_id=d["individual_id"],
        site=Site(d["site"]),
        fps=d["fps"],
        frame_count=d["frame_count"],
        width=d["width"],
        height=d["height"],
        color=ColorMode(d["color"]),
    )


# --- preprocess stage ---------------------------------------------------------

def _preprocess_one(args: tuple[str, str, dict]) -> dict:
    """Worker: decode, clean, write one video. Returns a manifest entry dict."""
    input_path, out_dir, cfg_map = args
    path = Path(input_path)
    out = Path(out_dir)
    entry: dict = {"input": path.name, "input_sha256": content_hash(path)}
    try:
        cfg = PreprocessConfig.from_mapping(cfg_map)
        meta = probe_metadata(path)
        entry["video_id"] = meta.video_id
        volume = load_video(path)
        result = preprocess_video(volume, cfg)
        if isinstance(result, Excluded):
            v = result.verdict
            entry["status"] = "excluded"
            entry["detail"] = f"doppler red={v.red_fraction:.6f} blue={v.blue_fraction:.6f}"
            return entry
        npy = out / f"{meta.video_id}.npy"
        np.save(npy, result.frames)
        meta_path = out / f"{meta.video_id}.json"
        meta_path.write_text(
            json.dumps(_meta_to_dict(result.meta), sort_keys=True) + "\n", "utf-8"
        )
        entry["status"] = "processed"
        entry["detail"] = ""
        entry["outputs"] = [npy.name, meta_path.name]
    except Exception as exc:  # per-file failures never abort the batch
        entry["status"] = "error"
        entry["detail"] = f"{type(exc).__name__}: {exc}"
    return entry


def _run_parallel(worker, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, jobs))


def cmd_preprocess(
    in_dir: str | Path,
    out_dir: str | Path,
    cfg: dict[str, str] | None = None,
    workers: int = 1,
) -> RunManifest:
    """Clean every video under in_dir; resumable via content hashes."""
    cfg = cfg or {}
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    processed_dir = out_dir / "processed"
    processed_dir.mkdir(parents=True, exist_ok=True)
    inputs = discover_inputs(in_dir)

    resolved_cfg = dict(PreprocessConfig.from_mapping(cfg).as_dict())
    cfg_strings = {k: f"{v:.10g}" for k, v in resolved_cfg.items()}
    manifest = RunManifest(
        run_id=run_id_for("preprocess", cfg_strings, [p.name for p in inputs]),
        stage="preprocess",
        config=cfg_strings,
    )

    previous: dict[str, dict] = {}
    manifest_path = out_dir / "manifest.json"
    if manifest_path.is_file():
        for e in read_manifest(manifest_path).get("entries", []):
            previous[e["input"]] = e

    started = time.monotonic()
    todo = []
    for path in inputs:
        prior = previous.get(path.name)
        if prior and prior["status"] in ("processed", "excluded", "skipped"):
            if prior["input_sha256"] == content_hash(path) and all(
                (processed_dir / name).exists() for name in prior.get("outputs", [])
            ):
                detail = prior["detail"] or prior["status"]
                manifest.entries.append(
                    ManifestEntry(
                        input=path.name,
                        status="skipped",
                        video_id=prior.get("video_id"),
                        detail=detail if detail != "skipped" else "",
                        input_sha256=prior["input_sha256"],
                        outputs=prior.get("outputs", []),
                    )
                )
                continue
        todo.append((str(path), str(processed_dir), cfg))

    for result in _run_parallel(_preprocess_one, todo, workers):
        manifest.entries.append(
            ManifestEntry(
                input=result["input"],
                status=result["status"],
                video_id=result.get("video_id"),
                detail=result.get("detail", ""),
                input_sha256=result["input_sha256"],
                outputs=result.get("outputs", []),
            )
        )
    manifest.elapsed_seconds = time.monotonic() - started

    exclusions = []
    for e in sorted(manifest.entries, key=lambda e: e.input):
        if "doppler" in e.detail and e.status in ("excluded", "skipped"):
            exclusions.append(f"{e.video_id}\t{e.detail}")
    (out_dir / "excluded.log").write_text(
        "".join(line + "\n" for line in exclusions), "utf-8"
    )
    manifest.write(manifest_path)
    return manifest


# --- inference stage ------------------------------------------------------------

@dataclass
class _ClipRecord:
    video_id: str
    individual_id: str
    prob: float


_HANDLE_CACHE: dict[str, object] = {}


def _cached_model(card_path: str):
    if card_path not in _HANDLE_CACHE:
        _HANDLE_CACHE[card_path] = load_model(card_path)
    return _HANDLE_CACHE[card_path]


def _infer_one(args: tuple[str, str, int, int]) -> dict:
    """Worker: plan, extract, normalize, predict all clips of one video."""
    meta_path, card_path, n_clips, seed = args
    meta_path = Path(meta_path)
    entry: dict = {"input": meta_path.stem, "input_sha256": ""}
    try:
        handle = _cached_model(card_path)
        meta = _meta_from_dict(json.loads(meta_path.read_text("utf-8")))
        frames = np.load(meta_path.with_suffix(".npy"))
        volume = FrameVolume(meta=meta, frames=frames)
        plans = plan_clips(meta, n_clips, seed=_video_seed(seed, meta.video_id))
        probs = []
        for plan in plans:
            clip = normalize(extract_clip(volume, plan), handle.norm_stats)
            probs.append(predict_clip(handle, clip).prob_high_vd)
        entry["status"] = "processed"
        entry["video_id"] = meta.video_id
        entry["individual_id"] = meta.individual_id
        entry["probs"] = probs
        entry["plans"] = [list(p.frame_indices) for p in plans]
    except Exception as exc:  # per-video failures never abort the batch
        entry["status"] = "error"
        entry["detail"] = f"{type(exc).__name__}: {exc}"
    return entry


def cmd_infer(
    inputs_dir: str | Path,
    card_path: str | Path,
    out_dir: str | Path,
    n_clips: int = 2,
    seed: int = 0,
    workers: int = 1,
    policy: AggregationPolicy = AggregationPolicy.MAJORITY,
) -> RunManifest:
    """Score processed videos (or a clip export) and write prediction dumps."""
    from .sampling import ClipIndexPlan, ClipTensor

    inputs_dir = Path(inputs_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    handle = load_model(card_path)  # fail fast on a broken card (exit 3)

    clip_preds: list[ClipPrediction] = []
    individual_of_video: dict[str, str] = {}
    config = {
        "model_id": handle.model_id,
        "n_clips": str(n_clips),
        "seed": str(seed),
        "policy": policy.value,
    }
    manifest = RunManifest(run_id="", stage="infer", config=config)
    started = time.monotonic()

    index_path = inputs_dir / "index.jsonl"
    if index_path.is_file():
        # clip-export mode: one record per pre-extracted clip
        records = [json.loads(l) for l in index_path.read_text("utf-8").splitlines() if l.strip()]
        manifest.run_id = run_id_for("infer", config, [r["file"] for r in records])
        for rec in records:
            data = load_exported_clip(inputs_dir / rec["file"])
            plan = ClipIndexPlan(
                video_id=rec["video_id"],
                start_frame=int(rec["frame_indices"][0]),
                frame_indices=tuple(rec["frame_indices"]),
                seed=int(rec["seed"]),
            )
            clip = normalize(
                ClipTensor(data=data, normalized=False, plan=plan), handle.norm_stats
            )
            clip_preds.append(predict_clip(handle, clip))
            individual_of_video[rec["video_id"]] = rec["individual_id"]
            manifest.entries.append(
                ManifestEntry(input=rec["file"], status="processed", video_id=rec["video_id"])
            )
    else:
        metas = sorted(inputs_dir.glob("*.json"))
        manifest.run_id = run_id_for("infer", config, [p.name for p in metas])
        jobs = [(str(p), str(card_path), n_clips, seed) for p in metas]
        for result in _run_parallel(_infer_one, jobs, workers):
            if result["status"] != "processed":
                manifest.entries.append(
                    ManifestEntry(
                        input=result["input"],
                        status="error",
                        detail=result.get("detail", ""),
                    )
                )
                continue
            video_id = result["video_id"]
            individual_of_video[video_id] = result["individual_id"]
            for indices, prob in zip(result["plans"], result["probs"]):
                plan = ClipIndexPlan(
                    video_id=video_id,
                    start_frame=int(indices[0]),
                    frame_indices=tuple(indices),
                    seed=_video_seed(seed, video_id),
                )
                clip_preds.append(
                    ClipPrediction(
                        plan=plan,
                        prob_high_vd=prob,
                        label=label_from_prob(prob),
                        model_id=handle.model_id,
                    )
                )
            manifest.entries.append(
                ManifestEntry(input=result["input"], status="processed", video_id=video_id)
            )

    write_prediction_dump(out_dir / "predictions_clips.jsonl", clip_preds, individual_of_video)
    video_preds, individual_preds = aggregate_predictions(clip_preds, individual_of_video, policy)
    _write_video_dump(out_dir / "predictions_videos.jsonl", video_preds, individual_of_video)
    _write_individual_dump(out_dir / "predictions_individuals.jsonl", individual_preds)

    manifest.elapsed_seconds = time.monotonic() - started
    manifest.write(out_dir / "manifest.json")
    return manifest


def aggregate_predictions(
    clip_preds: list[ClipPrediction],
    individual_of_video: dict[str, str],
    policy: AggregationPolicy = AggregationPolicy.MAJORITY,
):
    """Clip -> video -> individual, deterministic regardless of input order."""
    by_video: dict[str, list[ClipPrediction]] = {}
    for p in sorted(clip_preds, key=lambda p: (p.plan.video_id, p.plan.frame_indices)):
        by_video.setdefault(p.plan.video_id, []).append(p)
    video_preds = [vote_video(preds) for _, preds in sorted(by_video.items())]

    by_individual: dict[str, list] = {}
    for vp in video_preds:
        by_individual.setdefault(individual_of_video[vp.video_id], []).append(vp)
    individual_preds = [
        aggregate_individual(vps, individual_id, policy)
        for individual_id, vps in sorted(by_individual.items())
    ]
    return video_preds, individual_preds


def _write_video_dump(path: Path, video_preds, individual_of_video) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for vp in video_preds:
            fh.write(
                json.dumps(
                    {
                        "video_id": vp.video_id,
                        "individual_id": individual_of_video[vp.video_id],
                        "n_clips": vp.n_clips,
                        "votes_high": vp.votes_high,
                        "mean_prob": round(vp.mean_prob, 9),
                        "label": vp.label.value,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def _write_individual_dump(path: Path, individual_preds) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ip in individual_preds:
            fh.write(
                json.dumps(
                    {
                        "individual_id": ip.individual_id,
                        "n_videos": ip.n_videos,
                        "mean_prob": round(ip.mean_prob, 9),
                        "label": ip.label.value,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


# --- report stage -----------------------------------------------------------------

def cmd_report(
    dump_path: str | Path,
    cohort_path: str | Path,
    out_dir: str | Path,
    policy: AggregationPolicy = AggregationPolicy.MAJORITY,
) -> EvaluationReport:
    """Stratified clinical report from a clip prediction dump + cohort table."""
    records = read_prediction_dump(dump_path)
    cohort = read_cohort_table(cohort_path)
    by_id: dict[str, IndividualRecord] = {r.individual_id: r for r in cohort}

    unknown = sorted({r["individual_id"] for r in records} - set(by_id))
    if unknown:
        raise IdMismatch(f"{len(unknown)} dump individuals missing from cohort: {unknown[:5]}")

    clip_preds: list[ClipPrediction] = []
    individual_of_video: dict[str, str] = {}
    from .sampling import ClipIndexPlan

    for rec in records:
        plan = ClipIndexPlan(
            video_id=rec["video_id"],
            start_frame=0,
            frame_indices=(0,) * 16,  # placeholder; the dump carries ids only
            seed=0,
        )
        clip_preds.append(
            ClipPrediction(
                plan=plan,
                prob_high_vd=float(rec["prob_high_vd"]),
                label=Label(rec["label"]),
                model_id="dump",
            )
        )
        individual_of_video[rec["video_id"]] = rec["individual_id"]

    video_preds, individual_preds = aggregate_predictions(clip_preds, individual_of_video, policy)

    def truth_of(individual_id: str) -> int:
        return int(by_id[individual_id].hypertension_dx)

    clip_m = confusion(
        [int(p.label is Label.HIGH_VD) for p in clip_preds],
        [truth_of(individual_of_video[p.plan.video_id]) for p in clip_preds],
    )
    video_m = confusion(
        [int(v.label is Label.HIGH_VD) for v in video_preds],
        [truth_of(individual_of_video[v.video_id]) for v in video_preds],
    )
    individual_m = confusion(
        [int(i.label is Label.HIGH_VD) for i in individual_preds],
        [truth_of(i.individual_id) for i in individual_preds],
    )

    vd_labels = {ip.individual_id: ip.label for ip in individual_preds}
    predicted = [by_id[i] for i in sorted(vd_labels)]
    strat = stratify(predicted, vd_labels)
    strat.events = event_table(predicted, vd_labels)

    # video-level alignment vs age
    ages = []
    aligned = []
    for vp in video_preds:
        record = by_id[individual_of_video[vp.video_id]]
        ages.append(record.age)
        aligned.append(is_aligned(record, vp.label))
    curves = alignment_by_age(ages, aligned)

    missing = sorted(set(by_id) - set(vd_labels))
    report = EvaluationReport(
        clip_confusion=clip_m,
        video_confusion=video_m,
        individual_confusion=individual_m,
        stratification=strat,
        alignment=curves,
        counts={
            "clips": len(clip_preds),
            "videos": len(video_preds),
            "individuals_predicted": len(individual_preds),
            "individuals_in_cohort": len(cohort),
            "individuals_without_predictions": len(missing),
        },
    )
    write_report(report, out_dir)
    if missing:
        (Path(out_dir) / "missing_individuals.txt").write_text(
            "".join(m + "\n" for m in missing), "utf-8"
        )
    return report


# --- clip export stage ---------------------------------------------------------------

def cmd_sample(
    processed_dir: str | Path,
    cohort_path: str | Path,
    out_dir: str | Path,
    n_clips: int = 2,
    seed: int = 0,
) -> Path:
    """Export clips + index for the external training harness."""
    processed_dir = Path(processed_dir)
    cohort = {r.individual_id: r for r in read_cohort_table(cohort_path)}
    clips = []
    for meta_path in sorted(processed_dir.glob("*.json")):
        meta = _meta_from_dict(json.loads(meta_path.read_text("utf-8")))
        if meta.individual_id not in cohort:
            raise IdMismatch(f"{meta.video_id}: individual {meta.individual_id} not in cohort")
        frames = np.load(meta_path.with_suffix(".npy"))
        volume = FrameVolume(meta=meta, frames=frames)
        label = int(cohort[meta.individual_id].hypertension_dx)
        for plan in plan_clips(meta, n_clips, seed=_video_seed(seed, meta.video_id)):
            clips.append((extract_clip(volume, plan), meta.individual_id, label))
    return export_clips(clips, out_dir)


# --- synth stage ------------------------------------------------------------------------

def cmd_synth(out_dir: str | Path, cfg: dict[str, str], seed: int = 0) -> Path:
    """Generate a synthetic corpus per the config (see SynthCohortSpec)."""
    spec = SynthCohortSpec(
        n_individuals=int(cfg.get("n_individuals", 100)),
        videos_per_individual=int(cfg.get("videos_per_individual", 2)),
        hypertension_fraction=float(cfg.get("hypertension_fraction", 0.5)),
        discordant_fraction=float(cfg.get("discordant_fraction", 0.1)),
        doppler_video_fraction=float(cfg.get("doppler_video_fraction", 0.0)),
        rgb_fraction=float(cfg.get("rgb_fraction", 0.5)),
        fps=float(cfg.get("fps", 30.0)),
        width=int(cfg.get("width", 224)),
        height=int(cfg.get("height", 224)),
    )
    cohort = gen_cohort(spec, seed)
    return write_corpus(cohort, out_dir, container=cfg.get("container", "mixed"))
