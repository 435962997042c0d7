"""Tolerant parser for the dictionary output format LLM annotators emit.

The grammar accepts single- or double-quoted strings, values that are a
bare string or a list of strings, arbitrary whitespace, and trailing
commas:

    { 'LOC': ['Houston'], "PER": "Orlando Miller", }

Duplicate keys are merged in first-appearance order (values concatenated
in textual order) and reported to the caller.
"""

from __future__ import annotations


class DictTextError(ValueError):
    pass


_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", "'": "'", '"': '"'}


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> DictTextError:
        return DictTextError(f"{message} at offset {self.pos}")

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str) -> None:
        if self.peek() != char:
            raise self.error(f"expected {char!r}, found {self.peek()!r}")
        self.pos += 1

    def string(self) -> str:
        quote = self.peek()
        if quote not in "'\"":
            raise self.error(f"expected quoted string, found {quote!r}")
        self.pos += 1
        out = []
        while True:
            if self.pos >= len(self.text):
                raise self.error("unterminated string")
            ch = self.text[self.pos]
            self.pos += 1
            if ch == quote:
                return "".join(out)
            if ch == "\\" and self.pos < len(self.text):
                nxt = self.text[self.pos]
                self.pos += 1
                out.append(_ESCAPES.get(nxt, nxt))
            else:
                out.append(ch)

    def value(self) -> list[str]:
        self.skip_ws()
        if self.peek() in "'\"":
            return [self.string()]
        if self.peek() == "[":
            self.pos += 1
            items: list[str] = []
            while True:
                self.skip_ws()
                if self.peek() == "]":
                    self.pos += 1
                    return items
                items.append(self.string())
                self.skip_ws()
                if self.peek() == ",":
                    self.pos += 1
                elif self.peek() != "]":
                    raise self.error("expected ',' or ']' in list")
        raise self.error(f"expected string or list, found {self.peek()!r}")

    def dict_items(self) -> list[tuple[str, list[str]]]:
        self.skip_ws()
        self.expect("{")
        items: list[tuple[str, list[str]]] = []
        while True:
            self.skip_ws()
            if self.peek() == "}":
                self.pos += 1
                return items
            key = self.string()
            self.skip_ws()
            self.expect(":")
            items.append((key, self.value()))
            self.skip_ws()
            if self.peek() == ",":
                self.pos += 1
            elif self.peek() != "}":
                raise self.error("expected ',' or '}' in dict")


def parse_dict_text(text: str) -> tuple[list[tuple[str, list[str]]], list[str]]:
    """Parse text that must be exactly one dict; returns (items, merged_keys).

    items merge duplicate keys in first-appearance order; merged_keys lists
    any key that appeared more than once.
    """
    scanner = _Scanner(text)
    raw = scanner.dict_items()
    scanner.skip_ws()
    if scanner.pos != len(text):
        raise scanner.error("trailing content after dict")
    items: dict[str, list[str]] = {}
    merged = []
    for key, values in raw:
        if key in items:
            if key not in merged:
                merged.append(key)
            items[key].extend(values)
        else:
            items[key] = list(values)
    return list(items.items()), merged


def balanced_regions(text: str) -> list[tuple[int, int]]:
    """Half-open (start, end) offsets of top-level {...} regions, in textual
    order. Brace counting is quote-agnostic; the grammar parse applied to a
    region is what decides whether it really is an output dict."""
    regions = []
    depth = 0
    start = -1
    for i, ch in enumerate(text):
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                regions.append((start, i + 1))
    return regions


def has_unbalanced_braces(text: str) -> bool:
    depth = 0
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth = max(depth - 1, 0)
    return depth > 0


def format_pairs(pairs: list[tuple[str, str]]) -> str:
    """Canonical dict text for a pair list: labels in first-appearance order,
    values as double-quoted lists."""
    grouped: dict[str, list[str]] = {}
    for label, surface in pairs:
        grouped.setdefault(label, []).append(surface)

    def quote(s: str) -> str:
        return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

    body = ", ".join(
        f"{quote(label)}: [{', '.join(quote(v) for v in values)}]" for label, values in grouped.items()
    )
    return "{" + body + "}"
