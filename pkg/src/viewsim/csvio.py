"""Strict CSV helpers shared by every on-disk format in the package."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable, Iterable, Sequence


class FormatError(ValueError):
    """File structure is wrong (missing, renamed or reordered columns)."""


class ParseError(ValueError):
    """A field could not be parsed; carries the 1-based file line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def parse_int(text: str) -> int:
    return int(text)


def parse_bool01(text: str) -> bool:
    if text == "0":
        return False
    if text == "1":
        return True
    raise ValueError(f"expected 0 or 1, got {text!r}")


def parse_float(text: str) -> float:
    return float(text)


def fmt_float(x: float) -> str:
    # 17 significant digits round-trips every IEEE double
    return format(float(x), ".17g")


def check_header(found: Sequence[str], expected: Sequence[str]) -> None:
    found = list(found)
    for i, name in enumerate(expected):
        if i >= len(found):
            raise FormatError(f"missing column {name!r} (position {i + 1})")
        if found[i] != name:
            raise FormatError(f"expected column {name!r} at position {i + 1}, found {found[i]!r}")
    if len(found) > len(expected):
        raise FormatError(f"unexpected extra column {found[len(expected)]!r}")


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_rows(path, header: Sequence[str], parsers: Sequence[Callable[[str], object]]) -> list[tuple]:
    """Read a headed CSV, parsing each column; errors cite file line numbers."""
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, expected header {','.join(header)}") from None
        check_header(first, header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            parsed = []
            for name, parse, text in zip(header, parsers, row):
                try:
                    parsed.append(parse(text))
                except ValueError as exc:
                    raise ParseError(f"column {name!r}: cannot parse {text!r} ({exc})", lineno) from None
            out.append(tuple(parsed))
    return out
