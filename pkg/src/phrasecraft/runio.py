"""Run plumbing: flat config files, input digests, and the run manifest.

A manifest captures everything needed to reproduce a run: the argv, the
resolved configuration, the seed, SHA-256 digests of every input file,
and the toolkit version. The metrics emitted on stdout embed the manifest
without its wall-clock duration, so rerunning a command with identical
inputs prints byte-identical JSON.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field

from .errors import ParseError


def load_config(path) -> dict[str, str]:
    """Flat `key = value` file; blank lines and full-line # comments allowed."""
    cfg: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ParseError(f"expected 'key = value', got {raw.rstrip()!r}", path=path, line=lineno)
            cfg[key.strip()] = value.strip()
    return cfg


def resolve_option(name: str, flag_value, file_cfg: dict[str, str], default, cast):
    """Precedence: explicit flag > config file entry > built-in default."""
    if flag_value is not None:
        return flag_value
    if name in file_cfg:
        raw = file_cfg[name]
        try:
            return cast(raw)
        except (TypeError, ValueError):
            raise ParseError(f"config key {name!r} has unusable value {raw!r}") from None
    return default


def warn_unknown_keys(file_cfg: dict[str, str], known: set[str]) -> None:
    for key in sorted(set(file_cfg) - known):
        warnings.warn(f"ignoring unknown config key {key!r}", RuntimeWarning, stacklevel=2)


def parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command_line: list[str]
    config: dict
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    version: str = "0.0.0"
    duration_s: float | None = None

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_of(path)

    def to_dict(self, include_duration: bool = True) -> dict:
        out = {
            "command_line": list(self.command_line),
            "config": dict(sorted(self.config.items())),
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "version": self.version,
        }
        if include_duration and self.duration_s is not None:
            out["duration_s"] = round(self.duration_s, 3)
        return out


def write_json_atomic(path, obj) -> None:
    """Write JSON via a sibling temp file and an atomic rename."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    os.replace(tmp, path)


def emit_metrics(metrics: dict, manifest: RunManifest) -> None:
    """Single JSON object on stdout; a small readable table on stderr.

    The stdout object embeds the manifest minus its duration so identical
    reruns emit identical bytes.
    """
    payload = {"metrics": metrics, "manifest": manifest.to_dict(include_duration=False)}
    print(json.dumps(payload, sort_keys=True, ensure_ascii=False))
    width = max((len(k) for k in metrics), default=0)
    for key in sorted(metrics):
        value = metrics[key]
        shown = f"{value:.6g}" if isinstance(value, float) else str(value)
        print(f"  {key.ljust(width)}  {shown}", file=sys.stderr)
