"""Run manifests: reproducibility record written next to every output."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from . import __version__

# replay transport pins manifest timestamps so reruns are byte-identical
EPOCH_ISO = "1970-01-01T00:00:00Z"


def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    seed: Optional[int]
    inputs: dict[str, str]
    outputs: dict[str, str]
    started: str = ""
    finished: str = ""
    version: str = __version__
    deterministic_clock: bool = False

    def start(self) -> "RunManifest":
        self.started = EPOCH_ISO if self.deterministic_clock else _now_iso()
        return self

    def finish(self) -> "RunManifest":
        self.finished = EPOCH_ISO if self.deterministic_clock else _now_iso()
        return self

    def to_json(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "started": self.started,
            "finished": self.finished,
            "version": self.version,
        }

    def write(self, out_dir: Path) -> Path:
        """Atomic write of manifest.json into the output directory."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_dir / "manifest.json"
        payload = json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"
        fd, tmp_name = tempfile.mkstemp(dir=out_dir, suffix=".manifest.tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(payload)
            os.replace(tmp_name, target)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        return target
