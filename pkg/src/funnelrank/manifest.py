"""Run manifests: every CLI command records its resolved configuration and
artifact paths before doing any work, and stamps the end time on success.
Timestamps are the only non-reproducible fields; re-running a command from
its manifest regenerates the artifact files byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


@dataclass
class RunManifest:
    command: str
    resolved_config: dict
    seed: int | None
    artifacts: dict = field(default_factory=dict)
    tool_version: str = __version__
    started_at: str = ""
    finished_at: str | None = None

    @staticmethod
    def start(command: str, resolved_config: dict, seed: int | None,
              artifacts: dict, path: Path) -> "RunManifest":
        m = RunManifest(command=command, resolved_config=resolved_config,
                        seed=seed, artifacts=artifacts,
                        started_at=datetime.now(timezone.utc).isoformat())
        m.write(path)
        return m

    def finish(self, path: Path) -> None:
        self.finished_at = datetime.now(timezone.utc).isoformat()
        self.write(path)

    def write(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(vars(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return RunManifest(command=obj["command"], resolved_config=obj["resolved_config"],
                           seed=obj.get("seed"), artifacts=obj.get("artifacts", {}),
                           tool_version=obj.get("tool_version", __version__),
                           started_at=obj.get("started_at", ""),
                           finished_at=obj.get("finished_at"))


def load_config_file(path) -> dict:
    """Read a JSON config; a manifest file stands in for its resolved config."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if "resolved_config" in obj:
        return obj["resolved_config"]
    return obj
