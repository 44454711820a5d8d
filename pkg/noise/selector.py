"""
PerturbKit Selector - Boolean predicates over tensor metadata.

A selector picks which parameter tensors receive noise. Grammar
(keywords case-insensitive, whitespace allowed between tokens):

    expr   := term ('or' term)*
    term   := factor ('and' factor)*
    factor := 'not' factor | '(' expr ')' | atom
    atom   := 'kind:' IDENT | 'name:' GLOB | 'zone:' IDENT
            | 'layer:' INT '..' INT | 'all' | 'none'

Globs are anchored and support `*` (any run, dots included) and `?`
(one character). `layer:lo..hi` is half-open and only matches records
that carry a layer index.

Selectors never look at tensor values.
"""

import functools
import re
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Union

from params.store import ParamStore, TensorKind, TensorRecord, ZoneComponent


# ============================================================================
# ERRORS
# ============================================================================


class SelectorParseError(ValueError):
    """Selector text does not follow the grammar."""

    def __init__(self, message: str, offset: int, expected: Iterable[str]):
        self.offset = offset
        self.expected: FrozenSet[str] = frozenset(expected)
        super().__init__(
            f"{message} at offset {offset} (expected one of: {', '.join(sorted(self.expected))})"
        )


# ============================================================================
# AST
# ============================================================================


@dataclass(frozen=True)
class KindIs:
    kind: TensorKind

    def matches(self, rec: TensorRecord) -> bool:
        return rec.kind == self.kind

    def __str__(self) -> str:
        return f"kind:{self.kind.label}"


@dataclass(frozen=True)
class NameGlob:
    pattern: str

    def matches(self, rec: TensorRecord) -> bool:
        return _compile_glob(self.pattern).fullmatch(rec.name) is not None

    def __str__(self) -> str:
        return f"name:{self.pattern}"


@dataclass(frozen=True)
class ZoneIs:
    component: ZoneComponent

    def matches(self, rec: TensorRecord) -> bool:
        return rec.zone.component == self.component

    def __str__(self) -> str:
        return f"zone:{self.component.label}"


@dataclass(frozen=True)
class LayerIn:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 0 or self.lo >= self.hi:
            raise ValueError(f"layer range needs 0 <= lo < hi, got {self.lo}..{self.hi}")

    def matches(self, rec: TensorRecord) -> bool:
        layer = rec.zone.layer_index
        return layer is not None and self.lo <= layer < self.hi

    def __str__(self) -> str:
        return f"layer:{self.lo}..{self.hi}"


@dataclass(frozen=True)
class All:
    def matches(self, rec: TensorRecord) -> bool:
        return True

    def __str__(self) -> str:
        return "all"


@dataclass(frozen=True)
class Nothing:
    def matches(self, rec: TensorRecord) -> bool:
        return False

    def __str__(self) -> str:
        return "none"


@dataclass(frozen=True)
class And:
    left: "SelectorExpr"
    right: "SelectorExpr"

    def matches(self, rec: TensorRecord) -> bool:
        return self.left.matches(rec) and self.right.matches(rec)

    def __str__(self) -> str:
        return f"({self.left} and {self.right})"


@dataclass(frozen=True)
class Or:
    left: "SelectorExpr"
    right: "SelectorExpr"

    def matches(self, rec: TensorRecord) -> bool:
        return self.left.matches(rec) or self.right.matches(rec)

    def __str__(self) -> str:
        return f"({self.left} or {self.right})"


@dataclass(frozen=True)
class Not:
    operand: "SelectorExpr"

    def matches(self, rec: TensorRecord) -> bool:
        return not self.operand.matches(rec)

    def __str__(self) -> str:
        return f"not {self.operand}"


SelectorExpr = Union[KindIs, NameGlob, ZoneIs, LayerIn, All, Nothing, And, Or, Not]


@functools.lru_cache(maxsize=256)
def _compile_glob(pattern: str) -> "re.Pattern[str]":
    escaped = re.escape(pattern)
    return re.compile(escaped.replace(r"\*", ".*").replace(r"\?", "."))


# ============================================================================
# EVALUATION
# ============================================================================


def matches(expr: SelectorExpr, rec: TensorRecord) -> bool:
    """True when `rec`'s metadata satisfies `expr`."""
    return expr.matches(rec)


def select(store: ParamStore, expr: SelectorExpr) -> List[str]:
    """Names of matching records, in store order."""
    return [rec.name for rec in store if expr.matches(rec)]


def format_selector(expr: SelectorExpr) -> str:
    """Render an expression back into parseable selector text."""
    return str(expr)


# ============================================================================
# PARSER
# ============================================================================

_WORD = re.compile(r"[A-Za-z0-9_]+")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_GLOB = re.compile(r"[A-Za-z0-9_.*?]+")
_INT = re.compile(r"[0-9]+")

_ATOM_START = {"kind:", "name:", "zone:", "layer:", "all", "none", "not", "("}

KIND_ALIASES = {
    "weight": TensorKind.WEIGHT,
    "weights": TensorKind.WEIGHT,
    "bias": TensorKind.BIAS,
    "ln_gain": TensorKind.LAYER_NORM_GAIN,
    "layernormgain": TensorKind.LAYER_NORM_GAIN,
    "ln_bias": TensorKind.LAYER_NORM_BIAS,
    "layernormbias": TensorKind.LAYER_NORM_BIAS,
    "embedding": TensorKind.EMBEDDING,
    "other": TensorKind.OTHER,
}

ZONE_ALIASES = {
    "encoder": ZoneComponent.ENCODER,
    "decoder": ZoneComponent.DECODER,
    "head": ZoneComponent.HEAD,
    "none": ZoneComponent.NONE,
}


class _Parser:
    """Recursive-descent parser working directly on the source text."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    # -- helpers -------------------------------------------------------------

    def offset(self, pos: Optional[int] = None) -> int:
        """Byte offset of a character position."""
        return len(self.text[: self.pos if pos is None else pos].encode("utf-8"))

    def fail(self, message: str, expected: Iterable[str], pos: Optional[int] = None):
        raise SelectorParseError(message, self.offset(pos), expected)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek_keyword(self) -> Optional[str]:
        """Lower-cased word at the cursor, or None."""
        self.skip_ws()
        m = _WORD.match(self.text, self.pos)
        return m.group(0).lower() if m else None

    def consume(self, pattern: "re.Pattern[str]", what: str) -> str:
        self.skip_ws()
        m = pattern.match(self.text, self.pos)
        if not m:
            self.fail(f"Expected {what}", {what})
        self.pos = m.end()
        return m.group(0)

    # -- grammar -------------------------------------------------------------

    def parse(self) -> SelectorExpr:
        if self.at_end():
            self.fail("Empty selector", _ATOM_START)
        expr = self.expr()
        if not self.at_end():
            self.fail("Unexpected input", {"and", "or", "<end>"})
        return expr

    def expr(self) -> SelectorExpr:
        node = self.term()
        while self.peek_keyword() == "or":
            self.pos += 2
            node = Or(node, self.term())
        return node

    def term(self) -> SelectorExpr:
        node = self.factor()
        while self.peek_keyword() == "and":
            self.pos += 3
            node = And(node, self.factor())
        return node

    def factor(self) -> SelectorExpr:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.fail("Unexpected end of selector", _ATOM_START)
        if self.text[self.pos] == "(":
            self.pos += 1
            inner = self.expr()
            self.skip_ws()
            if self.pos >= len(self.text) or self.text[self.pos] != ")":
                self.fail("Unclosed parenthesis", {")", "and", "or"})
            self.pos += 1
            return inner
        if self.peek_keyword() == "not":
            self.pos += 3
            return Not(self.factor())
        return self.atom()

    def atom(self) -> SelectorExpr:
        start = self.pos
        m = _WORD.match(self.text, self.pos)
        if not m:
            self.fail("Expected a selector atom", _ATOM_START)
        word = m.group(0).lower()
        after = m.end()

        if after < len(self.text) and self.text[after] == ":":
            self.pos = after + 1
            if word == "kind":
                return self.kind_value()
            if word == "zone":
                return self.zone_value()
            if word == "name":
                return NameGlob(self.consume(_GLOB, "GLOB"))
            if word == "layer":
                return self.layer_range()
            self.fail(f"Unknown selector prefix {word!r}", {"kind:", "name:", "zone:", "layer:"}, start)

        if word == "all":
            self.pos = after
            return All()
        if word == "none":
            self.pos = after
            return Nothing()
        self.fail(f"Unknown selector atom {m.group(0)!r}", _ATOM_START, start)

    def kind_value(self) -> SelectorExpr:
        self.skip_ws()
        start = self.pos
        ident = self.consume(_IDENT, "IDENT").lower()
        if ident not in KIND_ALIASES:
            self.fail(f"Unknown tensor kind {ident!r}", KIND_ALIASES, start)
        return KindIs(KIND_ALIASES[ident])

    def zone_value(self) -> SelectorExpr:
        self.skip_ws()
        start = self.pos
        ident = self.consume(_IDENT, "IDENT").lower()
        if ident not in ZONE_ALIASES:
            self.fail(f"Unknown zone {ident!r}", ZONE_ALIASES, start)
        return ZoneIs(ZONE_ALIASES[ident])

    def layer_range(self) -> SelectorExpr:
        self.skip_ws()
        start = self.pos
        lo = int(self.consume(_INT, "INT"))
        self.skip_ws()
        if not self.text.startswith("..", self.pos):
            self.fail("Expected '..' in layer range", {".."})
        self.pos += 2
        hi = int(self.consume(_INT, "INT"))
        if lo >= hi:
            self.fail(f"Empty layer range {lo}..{hi}", {"lo < hi"}, start)
        return LayerIn(lo, hi)


def parse_selector(text: str) -> SelectorExpr:
    """
    Parse selector text into an immutable AST.

    Args:
        text: Selector source, e.g. "zone:encoder and layer:0..6"

    Returns:
        SelectorExpr

    Raises:
        SelectorParseError: With byte `offset` and `expected` token set

    Example:
        >>> parse_selector("zone:encoder and layer:0..6")
        And(left=ZoneIs(component=<ZoneComponent.ENCODER: 1>), right=LayerIn(lo=0, hi=6))
    """
    if not isinstance(text, str):
        raise TypeError(f"Expected selector text, got {type(text)}")
    return _Parser(text).parse()
