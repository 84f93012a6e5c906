"""Run manifests: the record every CLI command leaves behind.

A manifest captures the command name, its full configuration, the master
seed, package version, SHA-256 digests of inputs and outputs, and timestamps.
Re-running the same command with the same configuration must reproduce every
output byte for byte; `detchoice replay` automates that check.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .exceptions import DataError

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    created_at: str = ""

    def record_input(self, path) -> None:
        self.inputs[Path(path).name] = sha256_file(path)

    def record_output(self, path) -> None:
        self.outputs[Path(path).name] = sha256_file(path)

    def write(self, directory) -> Path:
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat()
        path = Path(directory) / MANIFEST_NAME
        payload = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "created_at": self.created_at,
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        missing = {"command", "config", "seed", "version"} - payload.keys()
        if missing:
            raise DataError(f"manifest {path} is missing fields: {sorted(missing)}")
        return cls(
            command=payload["command"],
            config=payload["config"],
            seed=int(payload["seed"]),
            version=payload["version"],
            inputs=payload.get("inputs", {}),
            outputs=payload.get("outputs", {}),
            created_at=payload.get("created_at", ""),
        )

    def verify_outputs(self, directory) -> dict[str, bool]:
        """Digest comparison of recorded outputs against files in a directory."""
        directory = Path(directory)
        result = {}
        for name, digest in self.outputs.items():
            target = directory / name
            result[name] = target.exists() and sha256_file(target) == digest
        return result
