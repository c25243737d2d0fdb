"""Run manifests: per-input terminal status, provenance, throughput."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class ManifestEntry:
    input: str
    status: str  # processed | excluded | error | skipped
    video_id: str | None = None
    detail: str = ""
    input_sha256: str = ""
    outputs: list[str] = field(default_factory=list)


@dataclass
class RunManifest:
    run_id: str
    stage: str
    config: dict[str, str]
    entries: list[ManifestEntry] = field(default_factory=list)
    elapsed_seconds: float = 0.0

    @property
    def totals(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.entries:
            counts[e.status] = counts.get(e.status, 0) + 1
        return counts

    def throughput(self) -> float:
        return len(self.entries) / self.elapsed_seconds if self.elapsed_seconds > 0 else 0.0

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        body = {
            "run_id": self.run_id,
            "stage": self.stage,
            "config": self.config,
            "totals": self.totals,
            "throughput_per_s": round(self.throughput(), 3),
            "elapsed_seconds": round(self.elapsed_seconds, 3),
            "entries": [
                {
                    "input": e.input,
                    "status": e.status,
                    "video_id": e.video_id,
                    "detail": e.detail,
                    "input_sha256": e.input_sha256,
                    "outputs": e.outputs,
                }
                for e in sorted(self.entries, key=lambda e: e.input)
            ],
        }
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", "utf-8")
        return path


def read_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text("utf-8"))


def content_hash(path: str | Path) -> str:
    """sha256 of a file, or of a directory's files (sorted, names included)."""
    path = Path(path)
    digest = hashlib.sha256()
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            digest.update(child.name.encode())
            digest.update(child.read_bytes())
    else:
        digest.update(path.read_bytes())
    return digest.hexdigest()


def run_id_for(stage: str, config: dict[str, str], inputs: list[str]) -> str:
    """Stable id: same stage + config + input inventory gives the same run id."""
    digest = hashlib.sha256()
    digest.update(stage.encode())
    digest.update(json.dumps(config, sort_keys=True).encode())
    for name in sorted(inputs):
        digest.update(name.encode())
    return digest.hexdigest()[:12]
