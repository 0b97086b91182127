"""Provenance blocks embedded in artifacts so any output can be re-derived."""

from __future__ import annotations

import hashlib
from pathlib import Path


class VocabularyMismatch(ValueError):
    """Two artifacts were produced against different vocabularies."""


def file_digest(path: str | Path) -> str:
    """Short sha256 of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:12]


def provenance_block(
    command: str,
    args: dict,
    inputs: dict[str, str | Path],
    vocab_hash: str,
    tool_version: str,
    seed: int | None = None,
) -> dict:
    """Everything needed to re-run the producing command bit-identically."""
    block = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items())},
        "inputs": {name: file_digest(path) for name, path in sorted(inputs.items())},
        "vocab_hash": vocab_hash,
        "tool": f"nerbench {tool_version}",
    }
    if seed is not None:
        block["seed"] = seed
    return block


def check_vocab_hash(expected: str, found: str | None, source: str) -> None:
    """Abort when an artifact was produced against a different vocabulary."""
    if found is not None and found != expected:
        raise VocabularyMismatch(
            f"vocabulary hash mismatch: {source} carries {found}, current vocabulary is {expected}"
        )
