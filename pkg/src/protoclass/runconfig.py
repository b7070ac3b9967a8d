"""Run configuration loading and stable digests.

A run configuration is the flat mapping of semantic fields a command runs
with (after merging built-in defaults, an optional TOML/JSON config file,
and explicit flags). Its digest is the SHA-256 of the canonical JSON
serialization, so the digest changes exactly when a semantic field does.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class RunConfig:
    command: str
    fields: dict[str, Any]

    @property
    def digest(self) -> str:
        doc = {"command": self.command, **self.fields}
        canonical = json.dumps(
            doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def get(self, key: str, default: Any = None) -> Any:
        return self.fields.get(key, default)


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a TOML or JSON config file into a plain mapping."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(data.decode("utf-8"))
    try:
        return tomllib.loads(data.decode("utf-8"))
    except tomllib.TOMLDecodeError:
        # tolerate a .toml-less JSON file
        try:
            return json.loads(data.decode("utf-8"))
        except json.JSONDecodeError:
            raise ValueError(f"config file {path} is neither valid TOML nor JSON")


def merge_config(
    command: str,
    defaults: Mapping[str, Any],
    file_config: Mapping[str, Any] | None,
    flags: Mapping[str, Any],
) -> RunConfig:
    """Defaults, overlaid by the file (top level or [command] table),
    overlaid by explicitly provided flags (non-None values)."""
    merged = dict(defaults)
    if file_config:
        section = file_config.get(command)
        source = section if isinstance(section, Mapping) else file_config
        for key, value in source.items():
            if isinstance(value, Mapping):
                continue
            if key in merged:
                merged[key] = value
    for key, value in flags.items():
        if value is not None:
            merged[key] = value
    return RunConfig(command=command, fields=merged)
