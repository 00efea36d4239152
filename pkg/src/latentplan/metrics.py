"""CSV metrics, run manifests, and staged output promotion.

Floats are written with repr (shortest round-trip form, full precision);
NaN serializes as the literal `nan`. Output files are staged in a sibling
temp directory and promoted into the output directory only when the whole
command has succeeded, so a failed run never leaves partial artifacts in
place.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics(rows, schema: list[str], path: str | Path) -> None:
    """Whole-file CSV write: header row, fixed column order, one row per dict."""
    path = Path(path)
    lines = [",".join(schema)]
    for i, row in enumerate(rows):
        missing = [c for c in schema if c not in row]
        extra = [c for c in row if c not in schema]
        if missing or extra:
            raise ValueError(
                f"row {i} does not conform to schema (missing {missing}, extra {extra})"
            )
        lines.append(",".join(format_value(row[c]) for c in schema))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


@dataclass
class RunManifest:
    command: str
    seed: int
    code_version: str
    config_text: str
    started_at: float
    finished_at: float = 0.0
    aggregate: dict = field(default_factory=dict)
    episodes: list = field(default_factory=list)

    def write(self, path: str | Path) -> None:
        self.finished_at = time.time()
        payload = {
            "command": self.command,
            "seed": self.seed,
            "code_version": self.code_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "config": self.config_text,
            "aggregate": self.aggregate,
            "episodes": self.episodes,
        }
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True))
        os.replace(tmp, path)


class StagedOutput:
    """Write files into a temp directory; promote them on success."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self._tmp = Path(
            tempfile.mkdtemp(
                dir=self.out_dir.parent, prefix=self.out_dir.name + ".partial-"
            )
        )

    def path(self, name: str) -> Path:
        return self._tmp / name

    def promote(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for item in sorted(self._tmp.iterdir()):
            os.replace(item, self.out_dir / item.name)
        self._tmp.rmdir()

    def discard(self) -> None:
        shutil.rmtree(self._tmp, ignore_errors=True)
