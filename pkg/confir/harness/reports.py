"""Report files: atomic writes and JSON lines."""

from __future__ import annotations

import os
import tempfile
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import TypeVar

from pydantic import BaseModel

T = TypeVar("T")
R = TypeVar("R")


def write_atomic(path: str | Path, data: bytes) -> None:
    """Write ``data`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def to_jsonl(records: Iterable[BaseModel]) -> str:
    """One compact JSON object per line, fields in declaration order."""
    return "".join(record.model_dump_json() + "\n" for record in records)


def write_jsonl(path: str | Path, records: Iterable[BaseModel]) -> None:
    write_atomic(path, to_jsonl(records).encode("utf-8"))


def run_jobs(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """
    Map ``fn`` over ``items`` in worker processes, keeping input order.

    ``fn`` must be a module-level function and ``items`` picklable.
    """
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
