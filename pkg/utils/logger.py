"""File-backed logger for run events."""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from utils.config import output_root, quiet

_WRITE_LOCK = threading.Lock()


def _to_plain(val: Any) -> Any:
    if isinstance(val, (np.floating, np.integer)):
        return val.item()
    if isinstance(val, np.ndarray):
        return val.tolist()
    if isinstance(val, (list, tuple)):
        return [_to_plain(v) for v in val]
    if isinstance(val, dict):
        return {str(k): _to_plain(v) for k, v in val.items()}
    if isinstance(val, Path):
        return str(val)
    return val


def _fmt(val: Any) -> str:
    if isinstance(val, float):
        return f"{val:.6g}"
    return str(val)


def log_event(
    stage: str,
    action: str,
    context: Optional[Dict[str, Any]] = None,
    log_path: Optional[Path] = None,
    **metrics: Any,
):
    """
    Persist a run event as one JSON line and echo it as ``[STAGE] action k=v``.
    Fields: timestamp, stage, action, context, metrics.
    """
    ts = datetime.now(timezone.utc).isoformat()
    row = {
        "timestamp": ts,
        "stage": stage,
        "action": (action or "note").strip().lower(),
        "context": _to_plain(context or {}),
        "metrics": _to_plain(metrics),
    }

    if not quiet():
        tail = " ".join(f"{k}={_fmt(v)}" for k, v in metrics.items())
        print(f"[{stage.upper()}] {row['action']} {tail}".rstrip())

    path = log_path or output_root() / "events.jsonl"
    try:
        with _WRITE_LOCK:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(row, sort_keys=True) + "\n")
    except OSError:
        # Read-only output roots must not break a computation
        pass


__all__ = ["log_event"]
