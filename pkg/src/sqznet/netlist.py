"""Netlist DSL: lexer, parser, elaboration to :class:`Network` and canonical
serialization.

Grammar::

    document   := statement* ;
    statement  := param | component | connect | detect | sweepdecl ;
    param      := "param" IDENT "=" expr ;
    component  := KIND IDENT "{" [ IDENT "=" expr [unit] { "," IDENT "=" expr [unit] } ] "}" ;
    KIND       := "laser" | "vacuum" | "bs" | "opa" | "loss" | "phase" | "mc" | "homodyne" ;
    connect    := "connect" IDENT "." IDENT "->" IDENT "." IDENT ;
    detect     := "detect" IDENT ;
    sweepdecl  := "sweep" "freq" NUMBER [unit] NUMBER [unit] ("lin" | "log") INTEGER ;
    expr       := term { ("+" | "-") term } ;
    term       := factor { ("*" | "/") factor } ;
    factor     := ("+" | "-") factor | NUMBER | IDENT | "(" expr ")" ;
    unit       := "Hz" | "kHz" | "MHz" ;

Comments run from ``#`` to end of line. Frequency-valued keys take Hz (bare
numbers are Hz) and are stored in rad/s; keys ending in ``_rate`` are rad/s.
``pi`` is predefined.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .components import ParameterError
from .core import SqznetError
from .network import (
    FREQ,
    KINDS,
    OPTIONAL,
    REQUIRED,
    Component,
    CycleError,
    Edge,
    FrequencySweep,
    Network,
    NetworkError,
)

TWO_PI = 2 * math.pi
UNITS = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6}
KEYWORDS = {"param", "connect", "detect", "sweep"}
RESERVED = KEYWORDS | set(KINDS) | set(UNITS)
MAX_DEPTH = 64
MAX_POINTS = 1_000_000
CONSTANTS = {"pi": math.pi}


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    line: int
    column: int
    token: str = ""

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class NetlistError(SqznetError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # NUMBER, IDENT, PUNCT, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<nl>\n)
  | (?P<ws>[ \t\r\f\v]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>->|[{}=,.+\-*/()])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list:
    tokens = []
    line, line_start = 1, 0
    pos, n = 0, len(text)
    match = _TOKEN_RE.match
    while pos < n:
        m = match(text, pos)
        if m is None:
            ch = text[pos]
            raise NetlistError([Diagnostic("error", f"unexpected character {ch!r}", line,
                                           pos - line_start + 1, ch)])
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "number":
            tokens.append(Token("NUMBER", m.group(), line, pos - line_start + 1))
        elif kind == "ident":
            tokens.append(Token("IDENT", m.group(), line, pos - line_start + 1))
        elif kind == "punct":
            tokens.append(Token("PUNCT", m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("EOF", "", line, n - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    tok: Token


@dataclass(frozen=True)
class Ref:
    name: str
    tok: Token


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"
    tok: Token


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    tok: Token


Expr = Union[Num, Ref, Unary, Binary]


@dataclass(frozen=True)
class ParamStmt:
    name: str
    expr: Expr
    tok: Token


@dataclass(frozen=True)
class ParamItem:
    key: str
    expr: Expr
    unit: Optional[str]
    tok: Token


@dataclass(frozen=True)
class ComponentStmt:
    kind: str
    name: str
    items: tuple
    tok: Token
    name_tok: Token


@dataclass(frozen=True)
class ConnectStmt:
    src: str
    src_port: str
    dst: str
    dst_port: str
    tok: Token
    toks: tuple  # src, src_port, dst, dst_port tokens


@dataclass(frozen=True)
class DetectStmt:
    name: str
    tok: Token
    name_tok: Token


@dataclass(frozen=True)
class SweepStmt:
    fmin: float
    fmax: float
    spacing: str
    points: int
    tok: Token


@dataclass
class NetlistDocument:
    statements: list
    warnings: list = field(default_factory=list)
    eof: Token = Token("EOF", "", 1, 1)

    def of_type(self, cls):
        return [s for s in self.statements if isinstance(s, cls)]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "EOF":
            self.i += 1
        return t

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        raise NetlistError([Diagnostic("error", message, tok.line, tok.col, tok.text)])

    def _describe(self, tok: Token) -> str:
        return "end of input" if tok.kind == "EOF" else f"'{tok.text}'"

    def expect_punct(self, text: str) -> Token:
        if self.tok.kind == "PUNCT" and self.tok.text == text:
            return self.advance()
        self.fail(f"expected '{text}', found {self._describe(self.tok)}")

    def expect_ident(self, what: str, allow_reserved: bool = False) -> Token:
        t = self.tok
        if t.kind != "IDENT":
            self.fail(f"expected {what}, found {self._describe(t)}")
        if not allow_reserved and t.text in RESERVED:
            self.fail(f"'{t.text}' is a reserved word and cannot be used as {what}")
        return self.advance()

    def expect_word(self, *words) -> Token:
        t = self.tok
        if t.kind == "IDENT" and t.text in words:
            return self.advance()
        self.fail(f"expected {' or '.join(repr(w) for w in words)}, found {self._describe(t)}")

    def number(self, what: str) -> Token:
        t = self.tok
        if t.kind != "NUMBER":
            self.fail(f"expected {what}, found {self._describe(t)}")
        return self.advance()

    # statements ------------------------------------------------------------

    def document(self) -> NetlistDocument:
        stmts = []
        while self.tok.kind != "EOF":
            stmts.append(self.statement())
        return NetlistDocument(stmts, [], self.tok)

    def statement(self):
        t = self.tok
        if t.kind != "IDENT":
            self.fail(f"expected a statement, found {self._describe(t)}")
        word = t.text
        if word == "param":
            self.advance()
            name = self.expect_ident("a parameter name")
            self.expect_punct("=")
            return ParamStmt(name.text, self.expr(), name)
        if word in KINDS:
            self.advance()
            return self.component(word, t)
        if word == "connect":
            self.advance()
            a = self.expect_ident("a component name")
            self.expect_punct(".")
            ap = self.expect_ident("a port name", allow_reserved=True)
            self.expect_punct("->")
            b = self.expect_ident("a component name")
            self.expect_punct(".")
            bp = self.expect_ident("a port name", allow_reserved=True)
            return ConnectStmt(a.text, ap.text, b.text, bp.text, t, (a, ap, b, bp))
        if word == "detect":
            self.advance()
            name = self.expect_ident("a detector name")
            return DetectStmt(name.text, t, name)
        if word == "sweep":
            self.advance()
            self.expect_word("freq")
            fmin = self.sweep_freq()
            fmax = self.sweep_freq()
            spacing = self.expect_word("lin", "log").text
            pt = self.number("an integer point count")
            if not pt.text.isdigit():
                self.fail("point count must be an integer", pt)
            points = int(pt.text)
            if points > MAX_POINTS:
                self.fail(f"point count exceeds {MAX_POINTS}", pt)
            return SweepStmt(fmin, fmax, spacing, points, t)
        nxt = self.toks[self.i + 1] if self.i + 1 < len(self.toks) else t
        if nxt.kind == "IDENT":
            self.fail(f"unknown component kind '{word}'")
        self.fail(f"unexpected '{word}', expected a statement")

    def sweep_freq(self) -> float:
        t = self.number("a frequency")
        value = _literal(t, self)
        if self.tok.kind == "IDENT" and self.tok.text in UNITS:
            value *= UNITS[self.advance().text]
        return value

    def component(self, kind: str, kind_tok: Token) -> ComponentStmt:
        name = self.expect_ident("a component name")
        self.expect_punct("{")
        items = []
        if not (self.tok.kind == "PUNCT" and self.tok.text == "}"):
            while True:
                key = self.expect_ident("a parameter key", allow_reserved=True)
                self.expect_punct("=")
                expr = self.expr()
                unit = None
                if self.tok.kind == "IDENT" and self.tok.text in UNITS:
                    unit = self.advance().text
                items.append(ParamItem(key.text, expr, unit, key))
                if self.tok.kind == "PUNCT" and self.tok.text == ",":
                    self.advance()
                    continue
                break
        self.expect_punct("}")
        return ComponentStmt(kind, name.text, tuple(items), kind_tok, name)

    # expressions -------------------------------------------------------------

    def expr(self, depth: int = 0) -> Expr:
        if depth > MAX_DEPTH:
            self.fail("expression nested too deeply")
        left = self.term(depth)
        while self.tok.kind == "PUNCT" and self.tok.text in ("+", "-"):
            op = self.advance()
            left = Binary(op.text, left, self.term(depth), op)
        return left

    def term(self, depth: int) -> Expr:
        left = self.factor(depth)
        while self.tok.kind == "PUNCT" and self.tok.text in ("*", "/"):
            op = self.advance()
            left = Binary(op.text, left, self.factor(depth), op)
        return left

    def factor(self, depth: int) -> Expr:
        t = self.tok
        if depth > MAX_DEPTH:
            self.fail("expression nested too deeply")
        if t.kind == "PUNCT" and t.text in ("+", "-"):
            self.advance()
            return Unary(t.text, self.factor(depth + 1), t)
        if t.kind == "NUMBER":
            self.advance()
            return Num(_literal(t, self), t)
        if t.kind == "IDENT":
            if t.text in RESERVED:
                self.fail(f"'{t.text}' cannot be used in an expression")
            self.advance()
            return Ref(t.text, t)
        if t.kind == "PUNCT" and t.text == "(":
            self.advance()
            e = self.expr(depth + 1)
            self.expect_punct(")")
            return e
        self.fail(f"expected an expression, found {self._describe(t)}")


def _literal(t: Token, p: _Parser) -> float:
    v = float(t.text)
    if not math.isfinite(v):
        p.fail(f"number {t.text} is out of range", t)
    return v


def _expr_refs(e: Expr):
    if isinstance(e, Ref):
        yield e
    elif isinstance(e, Unary):
        yield from _expr_refs(e.operand)
    elif isinstance(e, Binary):
        yield from _expr_refs(e.left)
        yield from _expr_refs(e.right)


def _err(tok: Token, message: str) -> Diagnostic:
    return Diagnostic("error", message, tok.line, tok.col, tok.text)


def _warn(tok: Token, message: str) -> Diagnostic:
    return Diagnostic("warning", message, tok.line, tok.col, tok.text)


def _check(doc: NetlistDocument) -> list:
    """Name resolution and per-kind checks; returns error diagnostics."""
    errors = []
    params = set(CONSTANTS)
    components: dict = {}
    for s in doc.statements:
        if isinstance(s, ComponentStmt):
            if s.name in components:
                errors.append(_err(s.name_tok, f"duplicate component name '{s.name}'"))
            else:
                components[s.name] = s

    def check_refs(e: Expr):
        for r in _expr_refs(e):
            if r.name not in params:
                errors.append(_err(r.tok, f"unknown parameter '{r.name}'"))

    seen_sweep = False
    detected = set()
    driven: dict = {}
    for s in doc.statements:
        if isinstance(s, ParamStmt):
            check_refs(s.expr)
            if s.name in params:
                errors.append(_err(s.tok, f"duplicate parameter '{s.name}'"))
            params.add(s.name)
        elif isinstance(s, ComponentStmt):
            spec = KINDS[s.kind]
            keys = set()
            for item in s.items:
                ps = spec.param(item.key)
                if ps is None:
                    errors.append(_err(item.tok, f"unknown parameter key '{item.key}' for {s.kind}"))
                    continue
                if item.key in keys:
                    errors.append(_err(item.tok, f"duplicate key '{item.key}'"))
                keys.add(item.key)
                if item.unit is not None and ps.unit != FREQ:
                    errors.append(_err(item.tok, f"unit '{item.unit}' given for non-frequency key '{item.key}'"))
                check_refs(item.expr)
            for ps in spec.params:
                if ps.default is REQUIRED and ps.key not in keys:
                    errors.append(_err(s.name_tok, f"{s.kind} '{s.name}' is missing required key '{ps.key}'"))
        elif isinstance(s, ConnectStmt):
            a, ap, b, bp = s.toks
            ca, cb = components.get(s.src), components.get(s.dst)
            if ca is None:
                errors.append(_err(a, f"unknown component '{s.src}'"))
            elif s.src_port not in KINDS[ca.kind].outputs:
                errors.append(_err(ap, f"'{s.src_port}' is not an output port of {ca.kind} "
                                       f"(outputs: {', '.join(KINDS[ca.kind].outputs) or 'none'})"))
            if cb is None:
                errors.append(_err(b, f"unknown component '{s.dst}'"))
            elif s.dst_port not in KINDS[cb.kind].inputs:
                errors.append(_err(bp, f"'{s.dst_port}' is not an input port of {cb.kind} "
                                       f"(inputs: {', '.join(KINDS[cb.kind].inputs) or 'none'})"))
            elif (s.dst, s.dst_port) in driven:
                errors.append(_err(bp, f"input port {s.dst}.{s.dst_port} is already connected"))
            else:
                driven[(s.dst, s.dst_port)] = s
        elif isinstance(s, DetectStmt):
            c = components.get(s.name)
            if c is None:
                errors.append(_err(s.name_tok, f"unknown component '{s.name}'"))
            elif c.kind != "homodyne":
                errors.append(_err(s.name_tok, f"'{s.name}' is a {c.kind}, only homodyne components can be detected"))
            elif s.name in detected:
                errors.append(_err(s.name_tok, f"'{s.name}' is already detected"))
            detected.add(s.name)
        elif isinstance(s, SweepStmt):
            if seen_sweep:
                errors.append(_err(s.tok, "duplicate sweep declaration"))
            seen_sweep = True
            if not (0 < s.fmin < s.fmax):
                errors.append(_err(s.tok, "sweep needs 0 < fmin < fmax"))
            if s.points < 2:
                errors.append(_err(s.tok, "sweep needs at least 2 points"))
    return errors


def parse(text: Union[str, bytes]) -> NetlistDocument:
    """Parse netlist text; raises :class:`NetlistError` carrying diagnostics."""
    if isinstance(text, (bytes, bytearray)):
        text = _decode(bytes(text))
    doc = _Parser(tokenize(text)).document()
    errors = _check(doc)
    if errors:
        raise NetlistError(errors)
    return doc


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        start = exc.start
        line = data.count(b"\n", 0, start) + 1
        line_start = data.rfind(b"\n", 0, start) + 1
        col = len(data[line_start:start].decode("utf-8", errors="replace")) + 1
        raise NetlistError([Diagnostic("error", "input is not valid UTF-8", line, col,
                                       repr(data[start:start + 1]))]) from None


# ---------------------------------------------------------------------------
# Elaboration
# ---------------------------------------------------------------------------


def _eval(e: Expr, env: dict) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Ref):
        return env[e.name]
    if isinstance(e, Unary):
        v = _eval(e.operand, env)
        return -v if e.op == "-" else v
    a, b = _eval(e.left, env), _eval(e.right, env)
    if e.op == "+":
        v = a + b
    elif e.op == "-":
        v = a - b
    elif e.op == "*":
        v = a * b
    else:
        if b == 0:
            raise NetlistError([_err(e.tok, "division by zero")])
        v = a / b
    if not math.isfinite(v):
        raise NetlistError([_err(e.tok, "arithmetic overflow")])
    return v


def evaluate_expr(e: Expr, env: dict | None = None) -> float:
    return _eval(e, {**CONSTANTS, **(env or {})})


def elaborate(doc: NetlistDocument, diagnostics: list | None = None) -> Network:
    """Substitute parameters and build a validated :class:`Network`.

    Warnings (auto-vacuum inputs, undetected homodynes) are appended to
    ``diagnostics`` and ``doc.warnings``.
    """
    env = dict(CONSTANTS)
    comps, edges, detectors = [], [], []
    sweep = None
    errors = []
    ctoks = {}
    for s in doc.statements:
        try:
            if isinstance(s, ParamStmt):
                env[s.name] = _eval(s.expr, env)
            elif isinstance(s, ComponentStmt):
                ctoks[s.name] = s
                values = {}
                for item in s.items:
                    v = _eval(item.expr, env)
                    if KINDS[s.kind].param(item.key).unit == FREQ:
                        v = v * UNITS[item.unit or "Hz"] * TWO_PI
                    values[item.key] = v
                try:
                    comps.append(Component(s.kind, s.name, values))
                except ParameterError as exc:
                    errors.append(_err(s.name_tok, str(exc)))
            elif isinstance(s, ConnectStmt):
                edges.append(Edge(s.src, s.src_port, s.dst, s.dst_port))
            elif isinstance(s, DetectStmt):
                detectors.append(s.name)
            elif isinstance(s, SweepStmt):
                sweep = FrequencySweep(s.fmin, s.fmax, s.spacing, s.points)
        except NetlistError as exc:
            errors.extend(exc.diagnostics)
        except ParameterError as exc:
            errors.append(_err(s.tok, str(exc)))
    if errors:
        raise NetlistError(errors)
    if not detectors:
        raise NetlistError([_err(doc.eof, "no detectors: add a 'detect NAME' statement")])
    try:
        net = Network(comps, edges, detectors, sweep)
    except CycleError as exc:
        stmt = next((s for s in doc.statements if isinstance(s, ConnectStmt)), None)
        tok = stmt.tok if stmt else doc.eof
        raise NetlistError([_err(tok, str(exc))]) from None
    except (NetworkError, ParameterError) as exc:
        raise NetlistError([_err(_locate(doc, str(exc)), str(exc))]) from None

    warnings = []
    driven = {(e.dst, e.dst_port) for e in edges}
    for c in comps:
        spec = c.spec
        for port in spec.inputs:
            if (c.name, port) in driven or port in spec.quiet_inputs or port in spec.optional_inputs:
                continue
            if c.kind == "homodyne" and c.name not in detectors:
                continue
            warnings.append(_warn(ctoks[c.name].name_tok,
                                  f"input {c.name}.{port} is unconnected; fed with vacuum"))
        if c.kind == "homodyne" and c.name not in detectors:
            warnings.append(_warn(ctoks[c.name].name_tok, f"homodyne '{c.name}' is never detected"))
    doc.warnings.extend(warnings)
    if diagnostics is not None:
        diagnostics.extend(warnings)
    return net


def _locate(doc: NetlistDocument, message: str) -> Token:
    for s in doc.statements:
        if isinstance(s, DetectStmt) and f"'{s.name}'" in message:
            return s.name_tok
        if isinstance(s, ConnectStmt) and (f"{s.src}.{s.src_port}" in message
                                           or f"{s.dst}.{s.dst_port}" in message):
            return s.tok
    return doc.eof


def load(text: Union[str, bytes], diagnostics: list | None = None) -> Network:
    return elaborate(parse(text), diagnostics)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def _hz_literal(rad: float) -> str:
    """Hz literal whose parsed value times 2pi reproduces ``rad`` exactly when
    possible."""
    h = rad / TWO_PI
    cand = h
    for _ in range(8):
        if cand * 1.0 * TWO_PI == rad:
            return _fmt(cand)
        cand = math.nextafter(cand, math.inf if cand * TWO_PI < rad else -math.inf)
    return _fmt(h)


def serialize(net: Network) -> str:
    """Canonical netlist text: components by name, then connections, detectors
    and the frequency sweep, each sorted."""
    lines = []
    for c in sorted(net.components, key=lambda c: c.name):
        items = []
        for ps in c.spec.params:
            if ps.key not in c.params:
                continue
            v = c.params[ps.key]
            if ps.unit == FREQ:
                items.append(f"{ps.key} = {_hz_literal(v)} Hz")
            else:
                items.append(f"{ps.key} = {_fmt(v)}")
        body = "{ " + ", ".join(items) + " }" if items else "{ }"
        lines.append(f"{c.kind} {c.name} {body}")
    lines += sorted(f"connect {e.src}.{e.src_port} -> {e.dst}.{e.dst_port}" for e in net.edges)
    lines += [f"detect {d}" for d in sorted(net.detectors)]
    if net.sweep is not None:
        s = net.sweep
        lines.append(f"sweep freq {_fmt(s.fmin)} {_fmt(s.fmax)} {s.spacing} {s.points}")
    return "\n".join(lines) + "\n"


def position_in_bounds(text: Union[str, bytes], d: Diagnostic) -> bool:
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    lines = text.split("\n")
    if not 1 <= d.line <= len(lines):
        return False
    return 1 <= d.column <= len(lines[d.line - 1]) + 1


__all__ = [
    "Diagnostic", "NetlistError", "NetlistDocument", "Token", "tokenize", "parse",
    "elaborate", "load", "serialize", "evaluate_expr", "position_in_bounds",
    "ParamStmt", "ComponentStmt", "ConnectStmt", "DetectStmt", "SweepStmt",
]
