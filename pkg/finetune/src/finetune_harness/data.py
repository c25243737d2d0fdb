"""Clip-export loading: raw float32 (16, 224, 224, 3) files + JSONL index."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

CLIP_SHAPE = (16, 224, 224, 3)
CLIP_BYTES = int(np.prod(CLIP_SHAPE)) * 4


class DatasetEmpty(RuntimeError):
    pass


class SingleClassDataset(RuntimeError):
    pass


def load_index(export_dir: str | Path) -> list[dict]:
    """Records from index.jsonl: file, video_id, individual_id, label, seed,
    frame_indices."""
    index_path = Path(export_dir) / "index.jsonl"
    if not index_path.is_file():
        raise DatasetEmpty(f"no index.jsonl under {export_dir}")
    records = []
    for line in index_path.read_text("utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    if not records:
        raise DatasetEmpty(f"{index_path} has no records")
    return records


def split_by_individual(
    records: list[dict], val_fraction: float = 0.2, seed: int = 0
) -> tuple[list[dict], list[dict]]:
    """Individual-level split so no person leaks across train/val."""
    ids = sorted({r["individual_id"] for r in records})
    order = np.random.default_rng(seed).permutation(ids)
    n_val = round(val_fraction * len(ids))
    val_ids = set(order[:n_val].tolist())
    train = [r for r in records if r["individual_id"] not in val_ids]
    val = [r for r in records if r["individual_id"] in val_ids]
    return train, val


class ClipExportDataset(Dataset):
    """Lazily reads clip files; normalizes to (x/255 - mean) / std in float32."""

    def __init__(
        self,
        export_dir: str | Path,
        records: list[dict],
        mean: tuple[float, float, float],
        std: tuple[float, float, float],
    ):
        if not records:
            raise DatasetEmpty("no clip records")
        self.export_dir = Path(export_dir)
        self.records = records
        self.mean = torch.tensor(mean, dtype=torch.float32)
        self.std = torch.tensor(std, dtype=torch.float32)

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> list[int]:
        return [int(r["label"]) for r in self.records]

    def __getitem__(self, i: int):
        rec = self.records[i]
        raw = np.fromfile(self.export_dir / rec["file"], dtype="<f4").reshape(CLIP_SHAPE)
        x = torch.from_numpy(raw.copy())
        x = (x / 255.0 - self.mean) / self.std
        return x, int(rec["label"])


def sample_weights(labels: list[int]) -> torch.Tensor:
    """N / (2 * N_class): balanced expected class draws under replacement."""
    arr = np.asarray(labels)
    n_pos = int((arr == 1).sum())
    n_neg = int((arr == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("both classes required for weighted sampling")
    n = arr.size
    weights = np.where(arr == 1, n / (2.0 * n_pos), n / (2.0 * n_neg))
    return torch.tensor(weights, dtype=torch.double)
