"""Line-oriented document parsing shared by the curve, battery-parameter
and scenario configuration file formats.

All formats in this family are plain UTF-8 text, one statement per line,
with ``#`` starting a comment and blank lines ignored.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Iterator

# Datasheet power-of-ten shorthand: "8.29^{-18}" or "8.29^-18" means 8.29e-18.
_POW10 = re.compile(r"^([+-]?\d+(?:\.\d+)?)\^\{?([+-]?\d+)\}?$")


class LineFormatError(ValueError):
    """Malformed line in a line-oriented document; the message names the line."""

    def __init__(self, origin: str, lineno: int, message: str) -> None:
        super().__init__(f"{origin}:{lineno}: {message}")
        self.origin = origin
        self.lineno = lineno


def tokenize(lines: Iterable[str], origin: str = "<input>") -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, tokens)`` for every non-empty, non-comment line."""
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        yield lineno, text.split()


def parse_number(token: str, origin: str = "<input>", lineno: int = 0) -> float:
    """Parse a numeric literal, accepting the datasheet shorthand ``m^{e}``.

    The shorthand is rebuilt as a decimal string ("8.29^{-18}" -> "8.29e-18")
    so the result is the correctly rounded double of the printed value.
    """
    try:
        return float(token)
    except ValueError:
        pass
    match = _POW10.match(token)
    if match is not None:
        return float(f"{match.group(1)}e{match.group(2)}")
    raise LineFormatError(origin, lineno, f"not a number: {token!r}")


def read_key_values(path: str | Path) -> dict[str, str]:
    """Read a ``key value`` document into a dict; later keys override earlier."""
    result: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, tokens in tokenize(fh, str(path)):
            if len(tokens) < 2:
                raise LineFormatError(str(path), lineno, "expected `key value`")
            result[tokens[0]] = " ".join(tokens[1:])
    return result
