"""Pipeline config grammar.

    node     := "combine(" weight "*" node ("," weight "*" node)* ")"
              | "lift(" adjuster-spec "," node ")"
              | "spine(" kappa "," node ")"
              | stream-spec

Stream and adjuster spec atoms are the short strings understood by
evidence.parse_stream and adjust.parse_adjuster, e.g.

    combine(0.5*ui-exch, 0.5*lift(mix, conf:lambda=1))

Stream atoms may themselves contain commas (conf:jumper,eps=0.01); inside a
combine list a comma separates components only when what follows starts a
new weighted term.  lift() rejects spine adjusters; the dedicated spine()
node exists for the negative control and is flagged as not anytime-valid in
the data filtration.

Parse errors carry the offending position.
"""

from __future__ import annotations

import re

from .adjust import parse_adjuster
from .evidence import EvidenceStream, parse_stream
from .lift import CombinedStream, LiftedStream, SpineAdjustedStream

__all__ = [
    "PipelineParseError",
    "build_pipeline",
    "SHIPPED_F_VALID_PIPELINES",
    "NEGATIVE_CONTROL_PIPELINES",
]

_WEIGHT_AHEAD = re.compile(r"\s*[0-9][0-9.eE+-]*\s*\*")
_NUMBER = re.compile(r"[0-9][0-9.eE+-]*")


class PipelineParseError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        marker = " " * pos + "^"
        super().__init__(f"{message}\n  {text}\n  {marker}")
        self.pos = pos


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def fail(self, message: str, pos: int | None = None):
        raise PipelineParseError(message, self.text, self.i if pos is None else pos)

    def skip_ws(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def expect(self, ch: str):
        self.skip_ws()
        if self.i >= len(self.text) or self.text[self.i] != ch:
            self.fail(f"expected {ch!r}")
        self.i += 1

    def keyword_ahead(self) -> str | None:
        m = re.match(r"\s*(combine|lift|spine)\s*\(", self.text[self.i:])
        return m.group(1) if m else None

    def parse_number(self) -> float:
        self.skip_ws()
        m = _NUMBER.match(self.text, self.i)
        if not m:
            self.fail("expected a number")
        start = self.i
        self.i = m.end()
        try:
            return float(m.group(0))
        except ValueError:
            self.fail("malformed number", start)

    def parse_node(self, in_combine: bool = False) -> EvidenceStream:
        self.skip_ws()
        kw = self.keyword_ahead()
        if kw == "combine":
            return self.parse_combine()
        if kw == "lift":
            return self.parse_lift()
        if kw == "spine":
            return self.parse_spine()
        return self.parse_atom(in_combine)

    def parse_combine(self) -> EvidenceStream:
        start = self.i
        self.i = self.text.index("(", self.i) + 1
        components: list[tuple[float, EvidenceStream]] = []
        while True:
            weight = self.parse_number()
            self.expect("*")
            node = self.parse_node(in_combine=True)
            components.append((weight, node))
            self.skip_ws()
            if self.i >= len(self.text):
                self.fail("unclosed combine(")
            if self.text[self.i] == ",":
                self.i += 1
                continue
            if self.text[self.i] == ")":
                self.i += 1
                break
            self.fail("expected ',' or ')'")
        try:
            return CombinedStream(components)
        except ValueError as exc:
            self.fail(str(exc), start)

    def parse_lift(self) -> EvidenceStream:
        start = self.i
        self.i = self.text.index("(", self.i) + 1
        self.skip_ws()
        adj_start = self.i
        comma = self.text.find(",", self.i)
        if comma < 0:
            self.fail("lift(adjuster, stream) needs two arguments")
        adj_text = self.text[self.i:comma]
        try:
            adjuster = parse_adjuster(adj_text)
        except ValueError as exc:
            self.fail(str(exc), adj_start)
        self.i = comma + 1
        node = self.parse_node()
        self.expect(")")
        try:
            return LiftedStream(node, adjuster)
        except ValueError as exc:
            self.fail(str(exc), start)

    def parse_spine(self) -> EvidenceStream:
        start = self.i
        self.i = self.text.index("(", self.i) + 1
        kappa = self.parse_number()
        self.expect(",")
        node = self.parse_node()
        self.expect(")")
        try:
            return SpineAdjustedStream(node, kappa)
        except ValueError as exc:
            self.fail(str(exc), start)

    def parse_atom(self, in_combine: bool) -> EvidenceStream:
        self.skip_ws()
        start = self.i
        while self.i < len(self.text):
            ch = self.text[self.i]
            if ch == ")":
                break
            if ch == "(":
                self.fail("unexpected '(' in stream spec")
            if ch == "," and in_combine:
                # a comma ends the component only if a new weighted term follows
                rest = self.text[self.i + 1:]
                if _WEIGHT_AHEAD.match(rest):
                    break
            self.i += 1
        atom = self.text[start:self.i].strip()
        if not atom:
            self.fail("expected a stream spec", start)
        try:
            return parse_stream(atom)
        except (ValueError, KeyError) as exc:
            self.fail(f"bad stream spec {atom!r}: {exc}", start)


def build_pipeline(text: str) -> EvidenceStream:
    """Parse a pipeline config string into a fresh (un-reset) stream."""
    parser = _Parser(text)
    node = parser.parse_node()
    parser.skip_ws()
    if parser.i != len(parser.text):
        parser.fail("trailing characters after pipeline")
    return node


#: Pipelines shipped as anytime-valid in the data filtration; the null
#: validity sweep holds each of these to the stopped-mean bound.
SHIPPED_F_VALID_PIPELINES: tuple[str, ...] = (
    "ui-exch",
    "lift(mix, conf:lambda=1)",
    "lift(mix, conf:jumper,eps=0.01)",
    "combine(0.5*ui-exch, 0.5*lift(mix, conf:lambda=1))",
)

#: Coarse-filtration processes expected to violate the stopped-mean bound
#: at data-dependent stopping rules.
NEGATIVE_CONTROL_PIPELINES: tuple[str, ...] = (
    "conf:lambda=1",
    "spine(0.5, conf:lambda=1)",
)
