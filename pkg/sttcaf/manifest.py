"""Run manifests: the full parameter set of a command, written next to its output."""

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional

MANIFEST_SUFFIX = ".manifest.json"


@dataclass
class RunManifest:
    command: str
    params: Dict[str, Any]
    seed: int
    tool_version: str
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )


def manifest_path(out_path: str) -> str:
    return out_path + MANIFEST_SUFFIX


def write_manifest(manifest: RunManifest, out_path: str) -> str:
    path = manifest_path(out_path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(asdict(manifest), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_manifest(path: str) -> RunManifest:
    """Read a manifest written by ``write_manifest``.

    Raises:
        ValueError: If the file is unreadable or lacks required fields
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"Cannot read manifest '{path}': {e}")
    missing = [k for k in ("command", "params", "seed", "tool_version") if k not in data]
    if missing:
        raise ValueError(f"Manifest '{path}' is missing {', '.join(missing)}")
    return RunManifest(
        command=data["command"],
        params=dict(data["params"]),
        seed=int(data["seed"]),
        tool_version=str(data["tool_version"]),
        timestamp=str(data.get("timestamp", "")),
    )


def replay_params(manifest: RunManifest, out: Optional[str] = None) -> Dict[str, Any]:
    """Recorded parameters, optionally redirected to another output path."""
    params = dict(manifest.params)
    if out is not None:
        params["out"] = out
    return params
