"""Run manifests: enough provenance to reproduce an invocation exactly."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: list
    config: dict
    seed: int
    input_digests: dict = field(default_factory=dict)
    tool_version: str = ""
    wall_time: float = 0.0
    privacy: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "input_digests": self.input_digests,
            "tool_version": self.tool_version,
            "wall_time": self.wall_time,
            "privacy": self.privacy,
        }

    def write(self, path) -> None:
        """Atomic write: the manifest file either exists complete or not at all."""
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
