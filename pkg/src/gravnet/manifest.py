"""Run manifests: what was run, on which inputs, with which tool version."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, Optional

from . import __version__

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_hash: str
    input_digests: Dict[str, str]
    tool_version: str
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(config_bytes: Optional[bytes] = None, params: Optional[Dict] = None) -> str:
    """Hash of the config file bytes, or of the canonical JSON of command parameters."""
    h = hashlib.sha256()
    if config_bytes is not None:
        h.update(config_bytes)
    if params is not None:
        h.update(json.dumps(params, sort_keys=True, default=str).encode())
    return h.hexdigest()


def utc_timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for byte-reproducible output directories
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
        if epoch
        else _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    )
    return when.isoformat().replace("+00:00", "Z")


def build_manifest(command: str, inputs: Iterable, config_hash: str) -> RunManifest:
    digests = {str(Path(p)): file_digest(p) for p in inputs}
    return RunManifest(command, config_hash, dict(sorted(digests.items())), __version__, utc_timestamp())


def write_manifest(out_dir, manifest: RunManifest) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(manifest.to_json(), encoding="utf-8")
    return path
