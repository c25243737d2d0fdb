import json
from pathlib import Path

import numpy as np
import pytest

CLIP_SHAPE = (16, 224, 224, 3)


def write_synthetic_export(
    out_dir: Path,
    n_clips: int = 60,
    n_individuals: int = 20,
    spreads: tuple[float, float] = (30.0, 90.0),
    seed: int = 7,
) -> Path:
    """Clip export in the documented format: two noise-amplitude classes,
    labels assigned per individual so the split has no leakage."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_clips):
        ind = i % n_individuals
        label = ind % 2
        spread = spreads[label]
        data = (
            127.5 + spread * (rng.random(CLIP_SHAPE, dtype=np.float32) - 0.5) * 2
        ).clip(0, 255)
        name = f"clip_{i:06d}.f32"
        (out_dir / name).write_bytes(np.ascontiguousarray(data, "<f4").tobytes())
        records.append(
            {
                "file": name,
                "video_id": f"i{ind:03d}-v{i // n_individuals}",
                "individual_id": f"i{ind:03d}",
                "label": label,
                "seed": seed,
                "frame_indices": list(range(16)),
            }
        )
    with open(out_dir / "index.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return out_dir


@pytest.fixture(scope="session")
def small_export(tmp_path_factory):
    return write_synthetic_export(tmp_path_factory.mktemp("export"))
