"""Reading, writing and chunking of JSONL text corpora."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

from dsir.errors import DuplicateIdError, MalformedInputError


@dataclass(frozen=True)
class Example:
    id: str
    text: str
    source: str
    meta: dict[str, str] | None = field(default=None, compare=True)

    def to_dict(self) -> dict:
        d = {"id": self.id, "text": self.text, "source": self.source}
        if self.meta is not None:
            d["meta"] = dict(self.meta)
        return d


@dataclass(frozen=True)
class ChunkConfig:
    chunk_size: int = 128
    drop_last_short: bool = False

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")


def chunk_document(doc_text: str, source: str, cfg: ChunkConfig | None = None,
                   id_prefix: str = "doc") -> list[Example]:
    """Split a document into examples of ``cfg.chunk_size`` whitespace words.

    Words are re-joined with a single space, so the original spacing and
    newlines are not preserved. Chunks never span documents.
    """
    cfg = cfg or ChunkConfig()
    words = doc_text.split()
    n = cfg.chunk_size
    out = []
    for idx, start in enumerate(range(0, len(words), n)):
        piece = words[start:start + n]
        if cfg.drop_last_short and len(piece) < n:
            break
        out.append(Example(id=f"{id_prefix}-{idx}", text=" ".join(piece), source=source))
    return out


def _parse_record(obj, lineno: int) -> Example:
    if not isinstance(obj, dict):
        raise MalformedInputError(f"line {lineno}: expected a JSON object")
    for key in ("id", "text", "source"):
        if not isinstance(obj.get(key), str):
            raise MalformedInputError(f"line {lineno}: field {key!r} missing or not a string")
    if not obj["source"]:
        raise MalformedInputError(f"line {lineno}: empty source")
    meta = obj.get("meta")
    if meta is not None:
        if not isinstance(meta, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in meta.items()):
            raise MalformedInputError(f"line {lineno}: meta must map strings to strings")
    return Example(id=obj["id"], text=obj["text"], source=obj["source"], meta=meta)


def iter_json_lines(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` for every non-blank line of a JSONL file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInputError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            yield lineno, obj


def read_jsonl(path: str | Path, check_unique: bool = True) -> Iterator[Example]:
    """Stream examples from a JSONL file.

    With ``check_unique`` the reader keeps the set of ids seen so far and
    raises on the first repeat.
    """
    seen: set[str] = set()
    for lineno, obj in iter_json_lines(path):
        ex = _parse_record(obj, lineno)
        if check_unique:
            if ex.id in seen:
                raise DuplicateIdError(f"line {lineno}: duplicate id {ex.id!r}")
            seen.add(ex.id)
        yield ex


def dump_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False) + "\n"


def write_examples(fh: IO[str], examples: Iterable[Example]) -> int:
    n = 0
    for ex in examples:
        fh.write(dump_line(ex.to_dict()))
        n += 1
    return n


def write_jsonl(path: str | Path, examples: Iterable[Example]) -> int:
    """Write examples one per line; returns the number written."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        return write_examples(fh, examples)


def concat_pairs(examples: Iterable[Example]) -> Iterator[Example]:
    """Join consecutive examples two at a time; an odd trailing example passes through."""
    pending = None
    for ex in examples:
        if pending is None:
            pending = ex
            continue
        yield Example(id=pending.id, text=pending.text + " " + ex.text,
                      source=pending.source, meta=pending.meta)
        pending = None
    if pending is not None:
        yield pending
