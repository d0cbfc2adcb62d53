"""Run manifests: enough provenance to re-run any command.

Every artifact-producing invocation writes one ``manifest.json`` next to
its outputs, recording the command, the fully resolved configuration, a
64-bit FNV-1a digest of each input file, the produced files, the seed, and
elapsed wall-clock time (the single non-deterministic field).
"""

from __future__ import annotations

import json
import os

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def digest_file(path) -> str:
    with open(path, "rb") as fh:
        return f"{fnv1a_64(fh.read()):016x}"


def write_manifest(out_dir, command: str, config_dict: dict,
                   inputs: dict[str, str], outputs: list[str], seed: int,
                   wall_clock_seconds: float) -> str:
    record = {
        "command": command,
        "config": config_dict,
        "inputs": {str(path): digest_file(path) for path in inputs.values() if path},
        "outputs": sorted(outputs),
        "seed": seed,
        "wall_clock_seconds": wall_clock_seconds,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path
