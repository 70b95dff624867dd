"""Recursive-descent parser for the textual IR."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Optional

from .core import BINARY_OPS, Block, Function, Operand, Operation, Region
from .types import I1, INDEX, ArrayType, IntType, PtrType, Type


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str  # value, symbol, int, ident, string, punct, eof
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<value>%[A-Za-z0-9_.$]+)
  | (?P<symbol>@[A-Za-z_][A-Za-z0-9_.$]*)
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>[=,:(){}<>\[\];])
    """,
    re.VERBOSE,
)

OPCODE_ALIASES = {"_blockld": "blockload", "_blockst": "blockstore"}


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.types: dict[str, Type] = {}

    # -- token helpers -------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col)

    def next(self) -> Token:
        tok = self.tok
        self.pos += 1
        return tok

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.tok
        return tok.kind == kind and (text is None or tok.text == text)

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            raise self.error(f"expected {want!r}, found {self.tok.text or 'end of input'!r}")
        return self.next()

    def punct(self, ch: str) -> Token:
        return self.expect("punct", ch)

    def value_name(self) -> str:
        return self.expect("value").text[1:]

    def integer(self) -> int:
        return int(self.expect("int").text)

    # -- types ------------------------------------------------------------
    def parse_type(self) -> Type:
        tok = self.expect("ident")
        name = tok.text
        if name == "index":
            return INDEX
        if name == "ptr":
            self.punct("<")
            elem = self.parse_type()
            self.punct(">")
            return PtrType(elem)
        if name == "array":
            self.punct("<")
            length = self.integer()
            self.expect("ident", "x")
            elem = self.parse_type()
            self.punct(">")
            return ArrayType(length, elem)
        if re.fullmatch(r"i\d+", name) and int(name[1:]) in (1, 32, 64):
            return IntType(int(name[1:]))
        raise self.error(f"unknown type {name!r}", tok)

    # -- values -----------------------------------------------------------
    def define(self, name: str, ty: Type) -> None:
        self.types[name] = ty

    def type_of(self, name: str, tok: Optional[Token] = None) -> Type:
        try:
            return self.types[name]
        except KeyError:
            raise self.error(f"use of undefined value %{name}", tok) from None

    def operand(self) -> str:
        tok = self.tok
        name = self.value_name()
        self.type_of(name, tok)
        return name

    def operand_list(self) -> list[str]:
        ops = [self.operand()]
        while self.accept("punct", ","):
            ops.append(self.operand())
        return ops

    def attr_value(self) -> Any:
        if self.at("int"):
            return self.integer()
        if self.at("string"):
            return self.next().text[1:-1]
        if self.accept("punct", "["):
            items = []
            if not self.at("punct", "]"):
                items.append(self.attr_value())
                while self.accept("punct", ","):
                    items.append(self.attr_value())
            self.punct("]")
            return tuple(items)
        return self.expect("ident").text

    def attr_dict(self) -> dict[str, Any]:
        self.punct("{")
        attrs: dict[str, Any] = {}
        if not self.at("punct", "}"):
            while True:
                key = self.expect("ident").text
                self.punct("=")
                attrs[key] = self.attr_value()
                if not self.accept("punct", ","):
                    break
        self.punct("}")
        return attrs

    # -- functions and blocks ----------------------------------------------
    def parse_function(self) -> Function:
        self.expect("ident", "func")
        name = self.expect("symbol").text[1:]
        self.punct("(")
        params: list[tuple[str, Type]] = []
        if not self.at("punct", ")"):
            while True:
                pname = self.value_name()
                self.punct(":")
                ptype = self.parse_type()
                params.append((pname, ptype))
                self.define(pname, ptype)
                if not self.accept("punct", ","):
                    break
        self.punct(")")
        ops = self.parse_body("return")
        return Function(name, tuple(params), Block((), tuple(ops)))

    def parse_body(self, implicit: str) -> list[Operation]:
        self.punct("{")
        ops: list[Operation] = []
        while not self.accept("punct", "}"):
            if self.at("eof"):
                raise self.error("unterminated block")
            ops.append(self.parse_op())
        if not ops or not ops[-1].is_terminator:
            ops.append(Operation(implicit))
        return ops

    def parse_op(self) -> Operation:
        start = self.tok
        results: list[str] = []
        if self.at("value"):
            results.append(self.value_name())
            while self.accept("punct", ","):
                results.append(self.value_name())
            self.punct("=")
        tok = self.expect("ident")
        code = OPCODE_ALIASES.get(tok.text, tok.text)
        if code == "for":
            return self.parse_for(results)
        op = self.parse_simple(code, results, tok)
        if len(op.results) != len(op.result_types):
            raise self.error(f"{code}: expected {len(op.results)} result type(s)", start)
        for r, t in zip(op.results, op.result_types):
            self.define(r, t)
        return op

    def result_types(self) -> list[Type]:
        types: list[Type] = []
        if self.accept("punct", ":"):
            types.append(self.parse_type())
            while self.accept("punct", ","):
                types.append(self.parse_type())
        return types

    def parse_simple(self, code: str, results: list[str], tok: Token) -> Operation:
        attrs: dict[str, Any] = {}
        operands: list[Operand] = []
        if code == "const":
            attrs["value"] = self.integer()
        elif code == "cmpi":
            attrs["pred"] = self.expect("ident").text
            self.punct(",")
            operands = self.operand_list()
        elif code == "readrf":
            attrs["reg"] = self.expect("ident").text
        elif code == "writerf":
            attrs["reg"] = self.expect("ident").text
            self.punct(",")
            operands = [self.operand()]
        elif code in ("blockload", "blockstore"):
            operands = [self.operand()]
            self.punct(",")
            operands.append(self.operand())
            self.punct(",")
            attrs["len"] = self.integer()
        elif code == "isax.call":
            attrs["callee"] = self.expect("symbol").text[1:]
            self.punct("(")
            if not self.at("punct", ")"):
                operands = self.operand_list()
            self.punct(")")
        elif self.at("value"):
            operands = self.operand_list()
        if self.at("ident", "attrs"):
            self.next()
            attrs.update(self.attr_dict())
        types = self.result_types()
        if results and not types:
            inferred = self.infer_type(code, operands)
            if inferred is None:
                raise self.error(f"{code}: result type required", tok)
            types = [inferred]
        return Operation(code, tuple(operands), tuple(results), tuple(types), attrs)

    def infer_type(self, code: str, operands: list[Operand]) -> Optional[Type]:
        if code in BINARY_OPS and operands:
            return self.types[operands[0]]
        if code == "cmpi":
            return I1
        if code == "select" and len(operands) == 3:
            return self.types[operands[1]]
        if code == "load" and operands:
            ptr = self.types[operands[0]]
            if isinstance(ptr, (PtrType, ArrayType)):
                return ptr.elem
        return None

    def bound(self) -> Operand:
        if self.at("int"):
            return self.integer()
        return self.operand()

    def parse_for(self, results: list[str]) -> Operation:
        iv = self.value_name()
        self.punct("=")
        lb = self.bound()
        self.expect("ident", "to")
        ub = self.bound()
        self.expect("ident", "step")
        step = self.bound()
        carried: list[tuple[str, Type]] = []
        inits: list[str] = []
        if self.accept("ident", "iter_args"):
            self.punct("(")
            while True:
                arg = self.value_name()
                self.punct("=")
                tok = self.tok
                init = self.operand()
                carried.append((arg, self.type_of(init, tok)))
                inits.append(init)
                if not self.accept("punct", ","):
                    break
            self.punct(")")
        attrs: dict[str, Any] = {}
        if self.accept("ident", "attrs"):
            attrs = self.attr_dict()
        if len(results) not in (0, len(inits)):
            raise self.error("for: result count must match iter_args")
        self.define(iv, INDEX)
        for a, t in carried:
            self.define(a, t)
        body_ops = self.parse_body("yield")
        body = Block(((iv, INDEX),) + tuple(carried), tuple(body_ops))
        if not results:
            # loop results are always materialized so that printing is canonical
            results = [f"{iv}.r{k}" for k in range(len(inits))]
        result_types = tuple(t for _, t in carried)
        for r, t in zip(results, result_types):
            self.define(r, t)
        return Operation(
            "for", (lb, ub, step) + tuple(inits), tuple(results), result_types, attrs, (Region((body,)),)
        )


def parse(text: str, verify: bool = True) -> Function:
    """Parse one ``func`` and (by default) verify it."""
    p = Parser(text)
    f = p.parse_function()
    p.expect("eof")
    if verify:
        from .verifier import verify_or_raise

        verify_or_raise(f)
    return f
