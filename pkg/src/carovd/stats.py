"""Cohort evaluation: splits, confusion metrics, four-group stratification.

Individuals are grouped by (clinical hypertension diagnosis) x (predicted
visual damage); the (dx-, lowVD) group is the baseline for prevalence
ratios. Quartiles use linear interpolation between order statistics at
position (n-1)*q so reports are bit-stable. Kernel density curves use
Gaussian kernels with Silverman's bandwidth unless one is given.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classify import Label
from .errors import (
    EmptyCohort,
    EmptyInput,
    LengthMismatch,
    MalformedCohortTable,
    MissingVdLabel,
    UndefinedClassRecall,
)

FLAG_FIELDS = (
    "antihypertensive_use",
    "atrial_fibrillation",
    "congestive_heart_failure",
    "past_mi",
    "past_stroke",
    "coronary_artery_disease",
    "cvd",
    "dyslipidemia",
    "diabetes_type2",
    "family_history_mi_stroke",
)
CONTINUOUS_FIELDS = ("age", "troponin_i", "nt_probnp", "plaque_count", "score2")
EVENT_FIELDS = ("stroke_5y", "mi_5y", "cardiac_death_5y", "cardiac_death_10y")

# group keys in fixed report order; baseline last
GROUP_KEYS = (
    (True, True),   # dx+ / high VD
    (True, False),  # dx+ / low VD
    (False, True),  # dx- / high VD
    (False, False), # dx- / low VD (baseline)
)
BASELINE_KEY = (False, False)


def group_name(key: tuple[bool, bool]) -> str:
    dx, vd = key
    return f"{'dx+' if dx else 'dx-'}_{'highVD' if vd else 'lowVD'}"


@dataclass
class IndividualRecord:
    individual_id: str
    age: float
    sex: str
    hypertension_dx: bool
    antihypertensive_use: bool
    atrial_fibrillation: bool = False
    congestive_heart_failure: bool = False
    past_mi: bool = False
    past_stroke: bool = False
    coronary_artery_disease: bool = False
    cvd: bool = False
    dyslipidemia: bool = False
    diabetes_type2: bool = False
    family_history_mi_stroke: bool = False
    troponin_i: float | None = None
    nt_probnp: float | None = None
    plaque_count: int = 0
    score2: float | None = None
    stroke_5y: bool = False
    mi_5y: bool = False
    cardiac_death_5y: bool = False
    cardiac_death_10y: bool = False

    def __post_init__(self) -> None:
        if self.age <= 0:
            raise ValueError(f"{self.individual_id}: age must be positive")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def split_cohort(
    ids: list[str], val_fraction: float = 0.2, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Individual-level split: seeded shuffle of the sorted ids, first
    round(val_fraction * N) go to validation. Disjoint and exhaustive."""
    if not ids:
        raise EmptyCohort("no ids to split")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if not 0.0 <= val_fraction <= 1.0:
        raise ValueError("val_fraction must be in [0, 1]")
    n_val = round(val_fraction * len(ids))
    order = np.random.default_rng(seed).permutation(sorted(ids))
    val = sorted(order[:n_val].tolist())
    train = sorted(order[n_val:].tolist())
    return train, val


def confusion(preds, truth) -> ConfusionMatrix:
    """2x2 counts with positive = hypertensive/HighVD (encoded 1)."""
    p = np.asarray(preds).astype(int)
    t = np.asarray(truth).astype(int)
    if p.shape != t.shape:
        raise LengthMismatch(f"preds {p.shape} vs truth {t.shape}")
    if p.size == 0:
        raise EmptyInput("no predictions")
    return ConfusionMatrix(
        tp=int(((p == 1) & (t == 1)).sum()),
        fp=int(((p == 1) & (t == 0)).sum()),
        tn=int(((p == 0) & (t == 0)).sum()),
        fn=int(((p == 0) & (t == 1)).sum()),
    )


def accuracy(m: ConfusionMatrix) -> float:
    if m.total == 0:
        raise UndefinedClassRecall("empty confusion matrix")
    return (m.tp + m.tn) / m.total


def balanced_accuracy(m: ConfusionMatrix) -> float:
    pos = m.tp + m.fn
    neg = m.tn + m.fp
    if pos == 0 or neg == 0:
        raise UndefinedClassRecall("a class has zero support")
    return (m.tp / pos + m.tn / neg) / 2.0


def quartiles(values) -> tuple[float, float, float]:
    """(q25, median, q75) by linear interpolation at position (n-1)*q."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("no values for quartiles")
    if not np.isfinite(arr).all():
        raise ValueError("quartiles require finite values")
    s = np.sort(arr)
    n = arr.size

    def at(q: float) -> float:
        pos = (n - 1) * q
        lo = math.floor(pos)
        hi = math.ceil(pos)
        frac = pos - lo
        return float(s[lo] + (s[hi] - s[lo]) * frac)

    return at(0.25), at(0.5), at(0.75)


def prevalence_ratio(group_prev: float, baseline_prev: float) -> float | None:
    """group/baseline prevalence; None (undefined) when the baseline is zero."""
    for name, v in (("group", group_prev), ("baseline", baseline_prev)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} prevalence {v} outside [0, 1]")
    if baseline_prev == 0.0:
        return None
    return group_prev / baseline_prev


@dataclass
class GroupSummary:
    n: int
    prevalence: dict[str, float]
    quartile: dict[str, tuple[float, float, float] | None]
    n_observed: dict[str, int]


@dataclass
class EventTable:
    # counts[event][med_use ("treated"/"untreated")][group name] -> int
    counts: dict[str, dict[str, dict[str, int]]]
    share_high_vd: dict[str, dict[str, float | None]]
    overall_share_high_vd: dict[str, float | None]
    total_events: int


@dataclass
class StratReport:
    cohort_n: int
    groups: dict[str, GroupSummary]
    ratios: dict[str, dict[str, float | None]]
    median_ratios: dict[str, dict[str, float | None]]
    events: EventTable | None = None

    def to_json_dict(self) -> dict:
        out = {
            "cohort_n": self.cohort_n,
            "groups": {
                name: {
                    "n": g.n,
                    "prevalence": g.prevalence,
                    "quartiles": {
                        k: list(v) if v is not None else None for k, v in g.quartile.items()
                    },
                    "n_observed": g.n_observed,
                }
                for name, g in self.groups.items()
            },
            "prevalence_ratios_vs_baseline": self.ratios,
            "median_ratios_vs_baseline": self.median_ratios,
        }
        if self.events is not None:
            out["events"] = {
                "counts": self.events.counts,
                "share_high_vd": self.events.share_high_vd,
                "overall_share_high_vd": self.events.overall_share_high_vd,
                "total_events": self.events.total_events,
            }
        return out


def _group_of(record: IndividualRecord, vd: Label) -> tuple[bool, bool]:
    return (record.hypertension_dx, vd is Label.HIGH_VD)


def stratify(
    individuals: list[IndividualRecord], vd_labels: dict[str, Label]
) -> StratReport:
    """Four-group summary: per-flag prevalence, per-variable quartiles,
    prevalence ratios against the (dx-, lowVD) baseline."""
    if not individuals:
        raise EmptyCohort("no individuals to stratify")
    missing = [r.individual_id for r in individuals if r.individual_id not in vd_labels]
    if missing:
        raise MissingVdLabel(f"no VD label for: {missing[:5]}")

    members: dict[tuple[bool, bool], list[IndividualRecord]] = {k: [] for k in GROUP_KEYS}
    for record in individuals:
        members[_group_of(record, vd_labels[record.individual_id])].append(record)

    groups: dict[str, GroupSummary] = {}
    for key in GROUP_KEYS:
        rows = members[key]
        prevalence = {}
        for flag in FLAG_FIELDS:
            prevalence[flag] = (
                sum(1 for r in rows if getattr(r, flag)) / len(rows) if rows else 0.0
            )
        quartile: dict[str, tuple[float, float, float] | None] = {}
        n_observed: dict[str, int] = {}
        for var in CONTINUOUS_FIELDS:
            observed = [
                float(getattr(r, var)) for r in rows if getattr(r, var) is not None
            ]
            n_observed[var] = len(observed)
            quartile[var] = quartiles(observed) if observed else None
        groups[group_name(key)] = GroupSummary(
            n=len(rows), prevalence=prevalence, quartile=quartile, n_observed=n_observed
        )

    baseline = groups[group_name(BASELINE_KEY)]
    ratios: dict[str, dict[str, float | None]] = {}
    median_ratios: dict[str, dict[str, float | None]] = {}
    for key in GROUP_KEYS:
        name = group_name(key)
        if key == BASELINE_KEY:
            continue
        g = groups[name]
        ratios[name] = {
            flag: (
                prevalence_ratio(g.prevalence[flag], baseline.prevalence[flag])
                if g.n > 0 and baseline.n > 0
                else None
            )
            for flag in FLAG_FIELDS
        }
        med: dict[str, float | None] = {}
        for var in CONTINUOUS_FIELDS:
            gq, bq = g.quartile[var], baseline.quartile[var]
            if gq is None or bq is None or bq[1] == 0:
                med[var] = None
            else:
                med[var] = gq[1] / bq[1]
        median_ratios[name] = med

    return StratReport(
        cohort_n=len(individuals), groups=groups, ratios=ratios, median_ratios=median_ratios
    )


def event_table(
    individuals: list[IndividualRecord], vd_labels: dict[str, Label]
) -> EventTable:
    """Event counts per (event type x 4 groups x antihypertensive use) plus
    the share of events falling in the high-VD groups."""
    missing = [r.individual_id for r in individuals if r.individual_id not in vd_labels]
    if missing:
        raise MissingVdLabel(f"no VD label for: {missing[:5]}")

    med_keys = ("treated", "untreated")
    counts: dict[str, dict[str, dict[str, int]]] = {
        ev: {mk: {group_name(k): 0 for k in GROUP_KEYS} for mk in med_keys}
        for ev in EVENT_FIELDS
    }
    for record in individuals:
        vd = vd_labels[record.individual_id]
        gname = group_name(_group_of(record, vd))
        mk = "treated" if record.antihypertensive_use else "untreated"
        for ev in EVENT_FIELDS:
            if getattr(record, ev):
                counts[ev][mk][gname] += 1

    high_groups = {group_name(k) for k in GROUP_KEYS if k[1]}
    share: dict[str, dict[str, float | None]] = {}
    overall: dict[str, float | None] = {}
    total_events = 0
    med_totals = {mk: [0, 0] for mk in med_keys}  # [high, all]
    for ev in EVENT_FIELDS:
        share[ev] = {}
        for mk in med_keys:
            per_group = counts[ev][mk]
            total = sum(per_group.values())
            high = sum(v for g, v in per_group.items() if g in high_groups)
            share[ev][mk] = high / total if total else None
            med_totals[mk][0] += high
            med_totals[mk][1] += total
            total_events += total
    for mk in med_keys:
        high, total = med_totals[mk]
        overall[mk] = high / total if total else None
    pooled_high = sum(v[0] for v in med_totals.values())
    pooled_total = sum(v[1] for v in med_totals.values())
    overall["all"] = pooled_high / pooled_total if pooled_total else None

    return EventTable(
        counts=counts,
        share_high_vd=share,
        overall_share_high_vd=overall,
        total_events=total_events,
    )


# --- alignment-by-age density curves ----------------------------------------

def silverman_bandwidth(x: np.ndarray) -> float:
    """0.9 * min(std, IQR/1.34) * n^(-1/5); falls back to 1.0 for degenerate
    samples (constant values or n == 1)."""
    x = np.asarray(x, dtype=np.float64)
    std = float(np.std(x))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = q75 - q25
    candidates = [v for v in (std, iqr / 1.34) if v > 0]
    if not candidates:
        return 1.0
    return 0.9 * min(candidates) * x.size ** (-0.2)


def gaussian_kde(x: np.ndarray, grid: np.ndarray, bandwidth: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = (grid[:, None] - x[None, :]) / bandwidth
    return np.exp(-0.5 * z * z).sum(axis=1) / (x.size * bandwidth * math.sqrt(2 * math.pi))


@dataclass
class AlignmentCurves:
    grid: np.ndarray
    density_aligned: np.ndarray
    density_other: np.ndarray
    proportion_aligned: np.ndarray
    n_aligned: int
    n_other: int
    bandwidth_aligned: float
    bandwidth_other: float


def alignment_by_age(
    ages, aligned, bandwidth: float | None = None, grid_points: int = 256
) -> AlignmentCurves:
    """Gaussian KDEs of aligned and non-aligned ages plus the pointwise
    aligned-proportion curve, clipped to [0, 1].

    The grid spans [min - 4h, max + 4h] so each curve integrates to 1 within
    1e-3 under the trapezoid rule even for degenerate samples.
    """
    ages = np.asarray(list(ages), dtype=np.float64)
    aligned = np.asarray(list(aligned), dtype=bool)
    if ages.size == 0:
        raise EmptyInput("no ages")
    if ages.shape != aligned.shape:
        raise LengthMismatch(f"ages {ages.shape} vs aligned {aligned.shape}")
    if bandwidth is not None and bandwidth <= 0:
        raise ValueError("bandwidth must be positive")

    a = ages[aligned]
    o = ages[~aligned]
    h_total = bandwidth if bandwidth is not None else silverman_bandwidth(ages)
    h_a = bandwidth if bandwidth is not None else (silverman_bandwidth(a) if a.size else h_total)
    h_o = bandwidth if bandwidth is not None else (silverman_bandwidth(o) if o.size else h_total)

    pad = 4.0 * max(h_total, h_a, h_o)
    grid = np.linspace(ages.min() - pad, ages.max() + pad, grid_points)

    density_a = gaussian_kde(a, grid, h_a) if a.size else np.zeros_like(grid)
    density_o = gaussian_kde(o, grid, h_o) if o.size else np.zeros_like(grid)
    density_total = gaussian_kde(ages, grid, h_total)

    with np.errstate(divide="ignore", invalid="ignore"):
        proportion = (density_a * a.size) / (density_total * ages.size)
    proportion = np.clip(np.nan_to_num(proportion, nan=0.0, posinf=1.0), 0.0, 1.0)

    return AlignmentCurves(
        grid=grid,
        density_aligned=density_a,
        density_other=density_o,
        proportion_aligned=proportion,
        n_aligned=int(a.size),
        n_other=int(o.size),
        bandwidth_aligned=h_a,
        bandwidth_other=h_o,
    )


def is_aligned(record: IndividualRecord, vd: Label) -> bool:
    """Prediction agrees with the clinical diagnosis."""
    return (vd is Label.HIGH_VD) == record.hypertension_dx


# --- cohort table IO ---------------------------------------------------------

_BOOL_TRUE = {"1", "true", "yes", "y"}
_BOOL_FALSE = {"0", "false", "no", "n", ""}

COHORT_COLUMNS = (
    ("individual_id", str),
    ("age", float),
    ("sex", str),
    ("hypertension_dx", bool),
    ("antihypertensive_use", bool),
    ("atrial_fibrillation", bool),
    ("congestive_heart_failure", bool),
    ("past_mi", bool),
    ("past_stroke", bool),
    ("coronary_artery_disease", bool),
    ("cvd", bool),
    ("dyslipidemia", bool),
    ("diabetes_type2", bool),
    ("family_history_mi_stroke", bool),
    ("troponin_i", "optional_float"),
    ("nt_probnp", "optional_float"),
    ("plaque_count", int),
    ("score2", "optional_float"),
    ("stroke_5y", bool),
    ("mi_5y", bool),
    ("cardiac_death_5y", bool),
    ("cardiac_death_10y", bool),
)


def _parse_bool(raw: str, column: str, path) -> bool:
    token = raw.strip().lower()
    if token in _BOOL_TRUE:
        return True
    if token in _BOOL_FALSE:
        return False
    raise MalformedCohortTable(f"{path}: bad boolean {raw!r} in column {column}")


def read_cohort_table(path: str | Path) -> list[IndividualRecord]:
    """Read the delimiter-separated cohort table (one row per individual).

    Header must name every documented column; empty cells mean missing and
    are only allowed for the optional lab/score columns.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MalformedCohortTable(f"{path}: empty table")
        expected = [name for name, _ in COHORT_COLUMNS]
        missing = set(expected) - set(reader.fieldnames)
        if missing:
            raise MalformedCohortTable(f"{path}: missing columns {sorted(missing)}")
        records = []
        for row in reader:
            kwargs = {}
            for column, kind in COHORT_COLUMNS:
                raw = (row.get(column) or "").strip()
                if kind is str:
                    kwargs[column] = raw
                elif kind is bool:
                    kwargs[column] = _parse_bool(raw, column, path)
                elif kind == "optional_float":
                    kwargs[column] = float(raw) if raw else None
                else:
                    if raw == "":
                        raise MalformedCohortTable(
                            f"{path}: empty required column {column}"
                        )
                    try:
                        kwargs[column] = kind(float(raw)) if kind is int else kind(raw)
                    except ValueError as exc:
                        raise MalformedCohortTable(
                            f"{path}: bad {column} value {raw!r}"
                        ) from exc
            try:
                records.append(IndividualRecord(**kwargs))
            except ValueError as exc:
                raise MalformedCohortTable(f"{path}: {exc}") from exc
    if not records:
        raise MalformedCohortTable(f"{path}: no rows")
    return records


def write_cohort_table(records: list[IndividualRecord], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in COHORT_COLUMNS])
        for r in records:
            row = []
            for column, kind in COHORT_COLUMNS:
                value = getattr(r, column)
                if value is None:
                    row.append("")
                elif kind is bool:
                    row.append("1" if value else "0")
                elif isinstance(value, float):
                    row.append(f"{value:.10g}")
                else:
                    row.append(str(value))
            writer.writerow(row)
    return path
