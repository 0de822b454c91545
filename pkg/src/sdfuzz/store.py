"""On-disk campaign tree: ``queue/``, ``crashes/``, ``feedback/``, ``report/``."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from .corpus import DEFAULT_MAX_INPUT_BYTES, Seed, ensure_campaign_dirs, save_seed
from .errors import StoreError
from .triage import CrashGroup

DEFAULT_INPUTS_PER_GROUP = 16


def dump_json(obj: Any) -> str:
    """Stable JSON rendering used for every document the campaign writes."""
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False) + "\n"


def _write(path: Path, data: str | bytes) -> None:
    try:
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data, encoding="utf-8")
    except OSError as exc:
        raise StoreError(f"write failed ({exc.strerror})", path) from exc


class CampaignStore:
    """Persists seeds, crash groups, feedback documents and round stats.

    Crash inputs are written as they arrive (up to ``inputs_per_group`` per
    group); ``group.json`` files are rewritten by :meth:`flush`, which the
    engine calls once per round.
    """

    def __init__(
        self,
        root: str | os.PathLike[str],
        max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES,
        inputs_per_group: int = DEFAULT_INPUTS_PER_GROUP,
    ) -> None:
        self.root = ensure_campaign_dirs(root)
        self.max_input_bytes = max_input_bytes
        self.inputs_per_group = inputs_per_group
        self._dirty: dict[int, CrashGroup] = {}

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    def save_seed(self, seed: Seed) -> Path:
        return save_seed(seed, self.root, self.max_input_bytes)

    def group_dir(self, index: int) -> Path:
        return self.root / "crashes" / f"g{index}"

    def record_crash(self, group: CrashGroup, payload: bytes) -> Path | None:
        """Store one crashing input; returns its path or None once the group is full."""
        self._dirty[group.index] = group
        n = group.count - 1
        if n >= self.inputs_per_group:
            return None
        gdir = self.group_dir(group.index)
        try:
            gdir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreError(f"cannot create crash group dir ({exc.strerror})", gdir) from exc
        path = gdir / f"input_{n}.bin"
        _write(path, payload)
        return path

    def flush(self) -> None:
        for index, group in sorted(self._dirty.items()):
            _write(self.group_dir(index) / "group.json", dump_json(group.to_dict()))
        self._dirty.clear()

    def append_round(self, stats: dict[str, Any]) -> None:
        path = self.report_dir / "rounds.jsonl"
        try:
            with path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(stats) + "\n")
        except OSError as exc:
            raise StoreError(f"cannot append round stats ({exc.strerror})", path) from exc

    def write_feedback(self, round_number: int, document: dict[str, Any]) -> Path:
        path = self.root / "feedback" / f"round_{round_number}.json"
        _write(path, dump_json(document))
        return path
