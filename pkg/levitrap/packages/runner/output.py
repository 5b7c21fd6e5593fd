import json
import logging
import threading
from collections import defaultdict
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from levitrap.core.utils.formatting import format_table

log = logging.getLogger("levitrap.packages.runner.output")

_locks: defaultdict[Path, threading.Lock] = defaultdict(threading.Lock)
_registry_lock = threading.Lock()


def _lock(path: Path) -> threading.Lock:
    with _registry_lock:
        return _locks[path.resolve()]


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    """
    Write a CSV table: UTF-8, LF line endings, floats with 9 significant digits.
    """
    text = format_table(header, rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _lock(path):
        with path.open("w", encoding="utf-8", newline="\n") as file:
            file.write(text)
    log.debug(f"Wrote {path}")


def _default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def to_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_default, ensure_ascii=False) + "\n"


def write_json(path: Path, data: Any):
    text = to_json(data)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _lock(path):
        with path.open("w", encoding="utf-8", newline="\n") as file:
            file.write(text)
    log.debug(f"Wrote {path}")
