"""Synthetic ultrasound-like corpora with exhaustive ground truth.

Videos: speckle-style background (box-filtered per-frame uniform noise)
whose contrast multiplier carries the texture class; a strictly static UI
overlay (glyph blocks + bottom heartline band); optionally a flickering
saturated Doppler-colored patch. Every generated artifact ships its ground
truth (overlay mask, planted Doppler fraction, texture class).

Cohorts: per-group clinical parameters planted so that the downstream
stratification can be checked against known prevalences, medians, and
event shares. Counts for diagnosis and discordance are exact (not
sampled), which keeps small-corpus tests stable.

All randomness flows from one counter-based (Philox) root seed; per-video
seeds are drawn from the cohort stream and recorded in the specs.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import uniform_filter

from .errors import InvalidSpec
from .media.types import ColorMode, FrameVolume, Site, VideoMeta
from .stats import IndividualRecord

_SITES = (Site.CCA_L, Site.CCA_R, Site.ECA_L, Site.ECA_R, Site.ICA_L, Site.ICA_R)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


# --- video generation ---------------------------------------------------------

@dataclass(frozen=True)
class OverlayParams:
    glyph_rows: int = 18      # top band of UI text blocks
    heartline_px: int = 20    # static band at the bottom
    scale_bar_cols: int = 6   # right-edge depth scale


@dataclass(frozen=True)
class DopplerParams:
    fraction: float = 0.1
    hue: str = "red"  # "red" | "blue"


@dataclass(frozen=True)
class SynthVideoSpec:
    video_id: str = "syn-0"
    individual_id: str = "ind-0"
    site: Site = Site.CCA_L
    width: int = 224
    height: int = 224
    fps: float = 30.0
    frame_count: int = 24
    color: ColorMode = ColorMode.GRAY8
    overlay: OverlayParams | None = field(default_factory=OverlayParams)
    doppler: DopplerParams | None = None
    texture_class: int = 0
    contrast: tuple[float, float] = (0.3, 0.6)
    level: float = 0.5

    def validate(self) -> "SynthVideoSpec":
        if self.frame_count < 2 or self.width < 64 or self.height < 64:
            raise InvalidSpec("need >= 2 frames and >= 64px sides")
        if self.texture_class not in (0, 1):
            raise InvalidSpec(f"texture_class must be 0 or 1, got {self.texture_class}")
        if self.contrast[0] == self.contrast[1]:
            raise InvalidSpec("contrast values must differ between classes")
        if self.doppler is not None:
            if self.color is not ColorMode.RGB8:
                raise InvalidSpec("Doppler patches need an RGB video")
            if not 0.0 <= self.doppler.fraction < 0.25:
                raise InvalidSpec("patch fraction must be in [0, 0.25)")
            if self.doppler.hue not in ("red", "blue"):
                raise InvalidSpec(f"unknown hue {self.doppler.hue!r}")
        return self


@dataclass
class VideoGroundTruth:
    ui_mask: np.ndarray           # (H, W) bool, True on overlay
    doppler_fraction: float       # actual planted pixel fraction
    doppler_hue: str | None
    texture_class: int


def gen_video(spec: SynthVideoSpec, seed: int) -> tuple[FrameVolume, VideoGroundTruth]:
    """Deterministic synthetic video plus its exact ground truth."""
    spec.validate()
    rng = _rng(seed)
    t, h, w = spec.frame_count, spec.height, spec.width
    contrast = spec.contrast[spec.texture_class]

    noise = rng.random((t, h, w), dtype=np.float32)
    smooth = uniform_filter(noise, size=(1, 3, 3), mode="nearest")
    gray = np.clip(spec.level + 2.0 * contrast * (smooth - 0.5), 0.0, 1.0)
    frames = np.rint(gray * 255.0).astype(np.uint8)[..., None]
    if spec.color is ColorMode.RGB8:
        frames = np.repeat(frames, 3, axis=3)

    ui_mask = np.zeros((h, w), dtype=bool)
    doppler_fraction = 0.0
    if spec.doppler is not None and spec.doppler.fraction > 0:
        # patch sits in the middle band, clear of the overlay regions
        ph = max(1, round(math.sqrt(spec.doppler.fraction) * h))
        pw = max(1, round(spec.doppler.fraction * h * w / ph))
        top = round(0.35 * h)
        left = int(rng.integers(2, max(3, w - spec_overlay_cols(spec) - pw - 2)))
        hue_center = 0.0 if spec.doppler.hue == "red" else 230.0
        for i in range(t):
            hue = (hue_center + float(rng.uniform(-8, 8))) % 360.0
            sat = float(rng.uniform(0.75, 0.95))
            val = float(rng.uniform(0.55, 0.85))
            r, g, b = colorsys.hsv_to_rgb(hue / 360.0, sat, val)
            frames[i, top : top + ph, left : left + pw] = np.rint(
                np.array([r, g, b]) * 255.0
            ).astype(np.uint8)
        doppler_fraction = (ph * pw) / (h * w)

    if spec.overlay is not None:
        ov = spec.overlay
        static = rng.integers(90, 256, size=(h, w), dtype=np.uint8)
        # UI text blocks along the top band
        col = 4
        while col + 14 < w - ov.scale_bar_cols - 4:
            ui_mask[3 : 3 + ov.glyph_rows, col : col + 14] = True
            col += 22
        # depth scale at the right edge
        ui_mask[:, w - ov.scale_bar_cols :] = True
        # heartline band at the bottom
        ui_mask[h - ov.heartline_px :, :] = True
        frames[:, ui_mask, :] = static[ui_mask, None]

    meta = VideoMeta(
        video_id=spec.video_id,
        individual_id=spec.individual_id,
        site=spec.site,
        fps=spec.fps,
        frame_count=t,
        width=w,
        height=h,
        color=spec.color,
    )
    truth = VideoGroundTruth(
        ui_mask=ui_mask,
        doppler_fraction=doppler_fraction,
        doppler_hue=spec.doppler.hue if spec.doppler else None,
        texture_class=spec.texture_class,
    )
    return FrameVolume(meta=meta, frames=frames), truth


def spec_overlay_cols(spec: SynthVideoSpec) -> int:
    return spec.overlay.scale_bar_cols if spec.overlay else 0


# --- cohort generation ---------------------------------------------------------

@dataclass(frozen=True)
class GroupParams:
    """Planted clinical parameters for one (dx, high-VD) group."""

    flag_prevalence: dict[str, float]
    troponin_median: float
    nt_probnp_median: float
    plaque_lambda: float
    score2_median: float
    event_rates: dict[str, float]


def _default_groups() -> dict[tuple[bool, bool], GroupParams]:
    # event rates keep the high-VD groups at 4x the low-VD groups, i.e. an
    # expected 80% high-VD event share with equal-size high/low populations
    high_events = {
        "stroke_5y": 0.12, "mi_5y": 0.12, "cardiac_death_5y": 0.08, "cardiac_death_10y": 0.16,
    }
    low_events = {k: v / 4 for k, v in high_events.items()}
    return {
        (False, False): GroupParams(
            flag_prevalence={
                "antihypertensive_use": 0.02, "atrial_fibrillation": 0.01,
                "congestive_heart_failure": 0.0, "past_mi": 0.005, "past_stroke": 0.005,
                "coronary_artery_disease": 0.01, "cvd": 0.015, "dyslipidemia": 0.10,
                "diabetes_type2": 0.02, "family_history_mi_stroke": 0.15,
            },
            troponin_median=4.0, nt_probnp_median=60.0, plaque_lambda=0.5,
            score2_median=2.5, event_rates=low_events,
        ),
        (False, True): GroupParams(
            flag_prevalence={
                "antihypertensive_use": 0.05, "atrial_fibrillation": 0.058,
                "congestive_heart_failure": 0.013, "past_mi": 0.0445, "past_stroke": 0.0385,
                "coronary_artery_disease": 0.087, "cvd": 0.096, "dyslipidemia": 0.19,
                "diabetes_type2": 0.098, "family_history_mi_stroke": 0.15,
            },
            troponin_median=6.0, nt_probnp_median=75.8, plaque_lambda=2.55,
            score2_median=6.0, event_rates=high_events,
        ),
        (True, False): GroupParams(
            flag_prevalence={
                "antihypertensive_use": 0.60, "atrial_fibrillation": 0.02,
                "congestive_heart_failure": 0.004, "past_mi": 0.01, "past_stroke": 0.01,
                "coronary_artery_disease": 0.02, "cvd": 0.03, "dyslipidemia": 0.15,
                "diabetes_type2": 0.05, "family_history_mi_stroke": 0.16,
            },
            troponin_median=5.0, nt_probnp_median=70.0, plaque_lambda=1.2,
            score2_median=4.0, event_rates=low_events,
        ),
        (True, True): GroupParams(
            flag_prevalence={
                "antihypertensive_use": 0.70, "atrial_fibrillation": 0.08,
                "congestive_heart_failure": 0.03, "past_mi": 0.06, "past_stroke": 0.05,
                "coronary_artery_disease": 0.11, "cvd": 0.13, "dyslipidemia": 0.25,
                "diabetes_type2": 0.20, "family_history_mi_stroke": 0.17,
            },
            troponin_median=8.0, nt_probnp_median=110.0, plaque_lambda=3.2,
            score2_median=9.0, event_rates=high_events,
        ),
    }


@dataclass(frozen=True)
class SynthCohortSpec:
    n_individuals: int = 100
    videos_per_individual: int = 2
    hypertension_fraction: float = 0.5
    discordant_fraction: float = 0.1
    doppler_video_fraction: float = 0.0
    rgb_fraction: float = 0.5
    frame_count_range: tuple[int, int] = (22, 30)
    fps: float = 30.0
    width: int = 224
    height: int = 224
    contrast: tuple[float, float] = (0.3, 0.6)
    lab_missing_rate: float = 0.1
    groups: dict[tuple[bool, bool], GroupParams] = field(default_factory=_default_groups)

    def validate(self) -> "SynthCohortSpec":
        if self.n_individuals < 1 or self.videos_per_individual < 1:
            raise InvalidSpec("need at least one individual and one video each")
        for name in ("hypertension_fraction", "discordant_fraction",
                     "doppler_video_fraction", "rgb_fraction", "lab_missing_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidSpec(f"{name} must be in [0, 1], got {v}")
        if self.frame_count_range[0] < 16:
            raise InvalidSpec("videos must allow 16-frame clips")
        return self


@dataclass
class CohortGroundTruth:
    hypertension_dx: bool
    discordant: bool
    texture_class: int
    group: tuple[bool, bool]


@dataclass
class SynthCohort:
    records: list[IndividualRecord]
    video_specs: dict[str, list[tuple[SynthVideoSpec, int]]]  # id -> [(spec, seed)]
    truth: dict[str, CohortGroundTruth]


def gen_cohort(spec: SynthCohortSpec, seed: int) -> SynthCohort:
    """Individuals with planted covariates plus per-individual video specs.

    texture_class = hypertension_dx XOR discordant, so a perfect
    texture classifier reproduces the planted groups exactly. Diagnosis and
    discordance counts are exact: round(fraction * n) individuals each.
    """
    spec.validate()
    rng = _rng(seed)
    n = spec.n_individuals

    order = rng.permutation(n)
    n_dx = round(spec.hypertension_fraction * n)
    dx_flags = np.zeros(n, dtype=bool)
    dx_flags[order[:n_dx]] = True
    n_disc = round(spec.discordant_fraction * n)
    disc_flags = np.zeros(n, dtype=bool)
    disc_flags[rng.permutation(n)[:n_disc]] = True

    records: list[IndividualRecord] = []
    truth: dict[str, CohortGroundTruth] = {}
    video_specs: dict[str, list[tuple[SynthVideoSpec, int]]] = {}

    total_videos = n * spec.videos_per_individual
    n_doppler = round(spec.doppler_video_fraction * total_videos)
    doppler_slots = np.zeros(total_videos, dtype=bool)
    doppler_slots[rng.permutation(total_videos)[:n_doppler]] = True
    n_rgb = round(spec.rgb_fraction * total_videos)
    rgb_slots = np.zeros(total_videos, dtype=bool)
    rgb_slots[rng.permutation(total_videos)[:n_rgb]] = True
    rgb_slots |= doppler_slots  # Doppler patches need color

    video_slot = 0
    for i in range(n):
        individual_id = f"ind-{i:05d}"
        dx = bool(dx_flags[i])
        discordant = bool(disc_flags[i])
        texture = int(dx != discordant)
        group_key = (dx, texture == 1)
        params = spec.groups[group_key]

        flags = {
            flag: bool(rng.random() < p) for flag, p in params.flag_prevalence.items()
        }
        age = float(np.clip(rng.normal(55.5, 11.2), 35.0, 85.0))
        troponin = (
            None
            if rng.random() < spec.lab_missing_rate
            else float(params.troponin_median * math.exp(rng.normal(0.0, 0.5)))
        )
        nt_probnp = (
            None
            if rng.random() < spec.lab_missing_rate
            else float(params.nt_probnp_median * math.exp(rng.normal(0.0, 0.6)))
        )
        plaque = int(rng.poisson(params.plaque_lambda))
        score2_eligible = 40.0 <= age <= 69.0 and not flags["cvd"] and not flags["diabetes_type2"]
        score2 = (
            float(params.score2_median * math.exp(rng.normal(0.0, 0.4)))
            if score2_eligible
            else None
        )
        events = {ev: bool(rng.random() < p) for ev, p in params.event_rates.items()}

        records.append(
            IndividualRecord(
                individual_id=individual_id,
                age=age,
                sex="F" if rng.random() < 0.5 else "M",
                hypertension_dx=dx,
                troponin_i=troponin,
                nt_probnp=nt_probnp,
                plaque_count=plaque,
                score2=score2,
                **flags,
                **events,
            )
        )
        truth[individual_id] = CohortGroundTruth(
            hypertension_dx=dx, discordant=discordant, texture_class=texture,
            group=group_key,
        )

        specs = []
        for v in range(spec.videos_per_individual):
            doppler = (
                DopplerParams(fraction=0.1, hue="red" if rng.random() < 0.5 else "blue")
                if doppler_slots[video_slot]
                else None
            )
            color = ColorMode.RGB8 if rgb_slots[video_slot] else ColorMode.GRAY8
            video_seed = int(rng.integers(0, 2**62))
            specs.append(
                (
                    SynthVideoSpec(
                        video_id=f"{individual_id}-v{v}",
                        individual_id=individual_id,
                        site=_SITES[video_slot % len(_SITES)],
                        width=spec.width,
                        height=spec.height,
                        fps=spec.fps,
                        frame_count=int(
                            rng.integers(spec.frame_count_range[0], spec.frame_count_range[1] + 1)
                        ),
                        color=color,
                        doppler=doppler,
                        texture_class=texture,
                        contrast=spec.contrast,
                    ),
                    video_seed,
                )
            )
            video_slot += 1
        video_specs[individual_id] = specs

    return SynthCohort(records=records, video_specs=video_specs, truth=truth)


# --- corpus writer ---------------------------------------------------------------

def write_corpus(
    cohort: SynthCohort,
    out_dir: str | Path,
    container: str = "mixed",
) -> Path:
    """Materialize a cohort: videos (+ ground-truth sidecars), cohort table,
    cohort ground truth. `container` is dicom | framedir | mixed."""
    from .media import dicom as dicom_io
    from .media import framedir as framedir_io
    from .stats import write_cohort_table

    if container not in ("dicom", "framedir", "mixed"):
        raise InvalidSpec(f"unknown container {container!r}")
    out_dir = Path(out_dir)
    videos_dir = out_dir / "videos"
    truth_dir = out_dir / "truth"
    videos_dir.mkdir(parents=True, exist_ok=True)
    truth_dir.mkdir(parents=True, exist_ok=True)

    k = 0
    for individual_id in sorted(cohort.video_specs):
        for video_spec, video_seed in cohort.video_specs[individual_id]:
            volume, truth = gen_video(video_spec, video_seed)
            use_dicom = container == "dicom" or (container == "mixed" and k % 2 == 0)
            if use_dicom:
                dicom_io.write_dicom(volume, videos_dir / f"{video_spec.video_id}.dcm")
            else:
                framedir_io.write_framedir(volume, videos_dir / video_spec.video_id)
            Image.fromarray(truth.ui_mask.astype(np.uint8) * 255, mode="L").save(
                truth_dir / f"{video_spec.video_id}.mask.png"
            )
            (truth_dir / f"{video_spec.video_id}.json").write_text(
                json.dumps(
                    {
                        "video_id": video_spec.video_id,
                        "individual_id": individual_id,
                        "doppler_fraction": truth.doppler_fraction,
                        "doppler_hue": truth.doppler_hue,
                        "texture_class": truth.texture_class,
                        "seed": video_seed,
                    },
                    sort_keys=True,
                )
                + "\n",
                "utf-8",
            )
            k += 1

    write_cohort_table(cohort.records, out_dir / "cohort.csv")
    with open(out_dir / "cohort_truth.jsonl", "w", encoding="utf-8") as fh:
        for individual_id in sorted(cohort.truth):
            gt = cohort.truth[individual_id]
            fh.write(
                json.dumps(
                    {
                        "individual_id": individual_id,
                        "hypertension_dx": gt.hypertension_dx,
                        "discordant": gt.discordant,
                        "texture_class": gt.texture_class,
                        "group": list(gt.group),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    return out_dir
