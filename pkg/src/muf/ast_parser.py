"""Concrete syntax, AST and A-normalizing parser for stream programs.

Source files follow the listing syntax::

    val f = stream {
      init = 0.;
      step (pre_x, obs) =
        let x = sample (gaussian (pre_x, 1.0)) in
        let () = observe (gaussian (x, 1.0), obs) in
        (x, x)
    }

Operator and function arguments must be values (constants, variables or
pairs of values). The parser restores that form by binding compound
arguments to fresh ``$k`` names. Tuples with more than two components are
right-nested pairs: ``(a, b, c)`` is ``(a, (b, c))``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterator

# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Pattern:
    pass


@dataclass(frozen=True)
class PVar(Pattern):
    name: str


@dataclass(frozen=True)
class PPair(Pattern):
    left: Pattern
    right: Pattern


@dataclass(frozen=True)
class PUnit(Pattern):
    pass


@dataclass(frozen=True)
class PWild(Pattern):
    pass


def free_pattern_vars(p: Pattern) -> set[str]:
    if isinstance(p, PVar):
        return {p.name}
    if isinstance(p, PPair):
        return free_pattern_vars(p.left) | free_pattern_vars(p.right)
    return set()


_uids = itertools.count(1)


def _uid() -> int:
    return next(_uids)


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Const(Expr):
    value: object
    ty: str  # "real" | "int" | "bool" | "unit"
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Var(Expr):
    name: str
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Pair(Expr):
    left: Expr
    right: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class OpApp(Expr):
    op: str
    arg: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class FunApp(Expr):
    fn: str
    arg: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class If(Expr):
    cond: Expr
    then: Expr
    orelse: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Let(Expr):
    pat: Pattern
    bound: Expr
    body: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Init(Expr):
    stream: str
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Infer(Expr):
    stream: str
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Unfold(Expr):
    inst: str
    arg: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Sample(Expr):
    dist: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Observe(Expr):
    dist: Expr
    value: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class Lambda(Expr):
    """Anonymous function, used as the argument of list and array builtins."""

    pat: Pattern
    body: Expr
    uid: int = field(default_factory=_uid, compare=False, repr=False)


@dataclass(frozen=True)
class ValDecl:
    pat: Pattern
    expr: Expr


@dataclass(frozen=True)
class FunDecl:
    name: str
    pat: Pattern
    body: Expr


@dataclass(frozen=True)
class StreamDecl:
    name: str
    init: Expr
    state_pat: Pattern
    arg_pat: Pattern
    body: Expr


Decl = ValDecl | FunDecl | StreamDecl


@dataclass(frozen=True)
class Program:
    decls: tuple
    main: str

    def stream(self, name: str) -> StreamDecl:
        for d in self.decls:
            if isinstance(d, StreamDecl) and d.name == name:
                return d
        raise KeyError(name)

    @property
    def streams(self) -> list[StreamDecl]:
        return [d for d in self.decls if isinstance(d, StreamDecl)]


def is_value(e: Expr) -> bool:
    if isinstance(e, (Const, Var)):
        return True
    return isinstance(e, Pair) and is_value(e.left) and is_value(e.right)


def walk(e: Expr) -> Iterator[Expr]:
    """All sub-expressions, pre-order."""
    stack = [e]
    while stack:
        x = stack.pop()
        yield x
        if isinstance(x, Pair):
            stack += [x.right, x.left]
        elif isinstance(x, (OpApp, FunApp, Unfold)):
            stack.append(x.arg)
        elif isinstance(x, If):
            stack += [x.orelse, x.then, x.cond]
        elif isinstance(x, Let):
            stack += [x.body, x.bound]
        elif isinstance(x, Sample):
            stack.append(x.dist)
        elif isinstance(x, Observe):
            stack += [x.value, x.dist]
        elif isinstance(x, Lambda):
            stack.append(x.body)


# ---------------------------------------------------------------------------
# Builtin names

DISTRIBUTIONS = ("gaussian", "beta", "bernoulli", "poisson", "uniform", "shuffle")
OPERATORS = (
    "plus", "sub", "mult", "div", "lt", "eq", "not", "ite", "mean", "eval",
    "List.init", "List.map", "List.filter", "List.append", "List.length", "List.iter2",
    "Array.init", "Array.get",
) + DISTRIBUTIONS
CONSTANTS = ("List.nil", "Array.empty")

# ---------------------------------------------------------------------------
# Lexer

KEYWORDS = {
    "val", "fun", "stream", "init", "step", "let", "in", "if", "then", "else",
    "sample", "observe", "infer", "unfold", "true", "false",
}


class ParseError(SyntaxError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line, self.col = line, col


class ScopeError(ParseError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # "num" | "ident" | "kw" | "sym" | "eof"
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<num>-?\d+(\.\d*)?([eE][+-]?\d+)?)
  | (?P<ident>\$\d+|[A-Z][A-Za-z0-9_]*\.[a-z_][A-Za-z0-9_']*|[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>->|[(),=;{}])
    """,
    re.VERBOSE,
)


def tokenize(src: str) -> list[Token]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        if kind == "ident" and text in KEYWORDS:
            kind = "kw"
        if kind not in ("ws", "comment"):
            toks.append(Token(kind, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0
        self.fresh = 0
        used = [int(t.text[1:]) for t in self.toks if t.kind == "ident" and t.text.startswith("$")]
        self.fresh = max(used, default=0)

    # token helpers
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.kind in ("kw", "sym") and t.text == text

    def advance(self) -> Token:
        t = self.peek()
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.peek()
        if not self.at(text):
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return self.advance()

    def ident(self) -> str:
        t = self.peek()
        if t.kind != "ident":
            raise ParseError(f"expected an identifier, found {t.text or 'end of input'!r}", t.line, t.col)
        self.advance()
        return t.text

    def error(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col)

    # A-normalization
    def new_name(self) -> str:
        self.fresh += 1
        return f"${self.fresh}"

    def atomize(self, e: Expr, binds: list) -> Expr:
        """Return a value standing for ``e``; records needed let-bindings."""
        if isinstance(e, (Const, Var)):
            return e
        if isinstance(e, Pair):
            left = self.atomize(e.left, binds)
            right = self.atomize(e.right, binds)
            if left is e.left and right is e.right:
                return e
            return Pair(left, right)
        name = self.new_name()
        binds.append((PVar(name), e))
        return Var(name)

    @staticmethod
    def wrap(binds: list, e: Expr) -> Expr:
        for pat, bound in reversed(binds):
            e = Let(pat, bound, e)
        return e

    # patterns
    def pattern(self) -> Pattern:
        items = [self.pattern_item()]
        while self.at(","):
            self.advance()
            items.append(self.pattern_item())
        return _nest(items, PPair)

    def pattern_item(self) -> Pattern:
        t = self.peek()
        if self.at("("):
            self.advance()
            if self.at(")"):
                self.advance()
                return PUnit()
            p = self.pattern()
            self.expect(")")
            return p
        if t.kind == "ident":
            self.advance()
            return PWild() if t.text == "_" else PVar(t.text)
        raise self.error(f"expected a pattern, found {t.text or 'end of input'!r}")

    # expressions
    def expr(self, tuples: bool = True) -> Expr:
        t = self.peek()
        if self.at("let"):
            self.advance()
            pat = self.pattern()
            self.expect("=")
            bound = self.expr()
            self.expect("in")
            return Let(pat, bound, self.expr(tuples))
        if self.at("if"):
            self.advance()
            cond = self.expr()
            self.expect("then")
            a = self.expr(False)
            self.expect("else")
            b = self.expr(False)
            binds: list = []
            c = self.atomize(cond, binds)
            first = self.wrap(binds, If(c, a, b))
        elif self.at("fun"):
            self.advance()
            pat = self.pattern()
            self.expect("->")
            first = Lambda(pat, self.expr(False))
        else:
            first = self.app()
        if not tuples or not self.at(","):
            return first
        items = [first]
        while self.at(","):
            self.advance()
            items.append(self.expr(False))
        return self.make_tuple(items)

    def make_tuple(self, items: list[Expr]) -> Expr:
        binds: list = []
        vals = [self.atomize(e, binds) for e in items]
        return self.wrap(binds, _nest(vals, Pair))

    def app(self) -> Expr:
        t = self.peek()
        if t.kind == "kw":
            if t.text == "sample":
                self.advance()
                binds: list = []
                d = self.atomize(self.app(), binds)
                return self.wrap(binds, Sample(d))
            if t.text == "observe":
                self.advance()
                binds = []
                items = self.arg_items(binds)
                if len(items) != 2:
                    raise ParseError("observe expects (distribution, value)", t.line, t.col)
                return self.wrap(binds, Observe(items[0], items[1]))
            if t.text in ("infer", "init"):
                self.advance()
                name = self.ident()
                return Infer(name) if t.text == "infer" else Init(name)
            if t.text == "unfold":
                self.advance()
                self.expect("(")
                inst = self.ident()
                if not self.at(","):
                    raise self.error("unfold expects (instance, argument)")
                binds = []
                items = self.arg_items(binds, opened=True)
                return self.wrap(binds, Unfold(inst, _nest(items, Pair)))
        if t.kind == "ident" and self._starts_atom(self.peek(1)):
            name = self.advance().text
            binds = []
            v = _nest(self.arg_items(binds), Pair)
            node = OpApp(name, v) if name in OPERATORS else FunApp(name, v)
            return self.wrap(binds, node)
        return self.atom()

    def arg_items(self, binds: list, opened: bool = False) -> list[Expr]:
        """Parse an argument and return its top-level components as values.

        ``opened`` means the opening parenthesis and the first component were
        already consumed and the next token is a comma.
        """
        if not opened:
            if not self.at("("):
                return [self.atomize(self.atom(), binds)]
            self.advance()
            if self.at(")"):
                self.advance()
                return [Const((), "unit")]
            items = [self.expr(False)]
        else:
            items = []
        while self.at(","):
            self.advance()
            items.append(self.expr(False))
        self.expect(")")
        return [self.atomize(e, binds) for e in items]

    def _starts_atom(self, t: Token) -> bool:
        return t.kind == "num" or (t.kind == "sym" and t.text == "(") or (
            t.kind == "ident"
        ) or (t.kind == "kw" and t.text in ("true", "false"))

    def atom(self) -> Expr:
        t = self.peek()
        if t.kind == "num":
            self.advance()
            if re.fullmatch(r"-?\d+", t.text):
                return Const(int(t.text), "int")
            return Const(float(t.text), "real")
        if t.kind == "kw" and t.text in ("true", "false"):
            self.advance()
            return Const(t.text == "true", "bool")
        if t.kind == "ident":
            self.advance()
            return Var(t.text)
        if self.at("("):
            self.advance()
            if self.at(")"):
                self.advance()
                return Const((), "unit")
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"unexpected {t.text or 'end of input'!r}")

    # declarations
    def decl(self):
        self.expect("val")
        if self.peek().kind == "ident" and self.peek(1).text == "=" and self.peek(2).text == "stream":
            name = self.ident()
            self.expect("=")
            return self.stream_body(name)
        if self.peek().kind == "ident" and self.peek(1).text == "=" and self.peek(2).text == "fun":
            name = self.ident()
            self.expect("=")
            self.expect("fun")
            pat = self.pattern()
            self.expect("->")
            return FunDecl(name, pat, self.expr())
        pat = self.pattern()
        self.expect("=")
        return ValDecl(pat, self.expr())

    def stream_body(self, name: str) -> StreamDecl:
        self.expect("stream")
        self.expect("{")
        self.expect("init")
        self.expect("=")
        init = self.expr()
        self.expect(";")
        self.expect("step")
        t = self.peek()
        pat = self.pattern_item()
        if not isinstance(pat, PPair):
            raise ParseError("step expects (state, input) patterns", t.line, t.col)
        self.expect("=")
        body = self.expr()
        if self.at(";"):
            self.advance()
        self.expect("}")
        return StreamDecl(name, init, pat.left, pat.right, body)

    def program(self, check_scope: bool) -> Program:
        decls = []
        names: set[str] = set()
        while self.peek().kind != "eof":
            t = self.peek()
            d = self.decl()
            for n in _decl_names(d):
                if n in names:
                    raise ParseError(f"duplicate declaration of {n}", t.line, t.col)
                names.add(n)
            decls.append(d)
        streams = [d for d in decls if isinstance(d, StreamDecl)]
        if not streams:
            raise ParseError("program declares no stream function", self.peek().line, self.peek().col)
        main = "main" if any(d.name == "main" for d in streams) else streams[-1].name
        prog = Program(tuple(decls), main)
        if check_scope:
            check_scopes(prog)
        return prog


def _nest(items, pair):
    out = items[-1]
    for x in reversed(items[:-1]):
        out = pair(x, out)
    return out


def _decl_names(d) -> list[str]:
    if isinstance(d, ValDecl):
        return sorted(free_pattern_vars(d.pat))
    return [d.name]


def parse(src: str, check_scope: bool = True) -> Program:
    """Parse a program; with ``check_scope`` every name must be bound before use."""
    return _Parser(src).program(check_scope)


def parse_expr(src: str) -> Expr:
    p = _Parser(src)
    e = p.expr()
    if p.peek().kind != "eof":
        raise p.error(f"unexpected {p.peek().text!r}")
    return e


# ---------------------------------------------------------------------------
# Scoping


def check_scopes(prog: Program) -> None:
    env: dict[str, str] = {c: "val" for c in CONSTANTS}
    for d in prog.decls:
        if isinstance(d, ValDecl):
            _scope_expr(d.expr, env, set())
            for n in free_pattern_vars(d.pat):
                env[n] = "val"
        elif isinstance(d, FunDecl):
            _scope_expr(d.body, env, free_pattern_vars(d.pat))
            env[d.name] = "fun"
        else:
            _scope_expr(d.init, env, set())
            env[d.name] = "stream"
            local = free_pattern_vars(d.state_pat) | free_pattern_vars(d.arg_pat)
            _scope_expr(d.body, env, local)


def _scope_expr(e: Expr, env: dict[str, str], local: set[str]) -> None:
    def need(name: str, kinds: tuple[str, ...], what: str):
        if name in local and "val" in kinds:
            return
        if name in local and "fun" in kinds:
            return
        if env.get(name) in kinds:
            return
        raise ScopeError(f"unbound {what} {name}")

    if isinstance(e, Var):
        need(e.name, ("val", "fun"), "identifier")
    elif isinstance(e, Const):
        pass
    elif isinstance(e, Pair):
        _scope_expr(e.left, env, local)
        _scope_expr(e.right, env, local)
    elif isinstance(e, OpApp):
        _scope_expr(e.arg, env, local)
    elif isinstance(e, FunApp):
        need(e.fn, ("fun",), "function")
        _scope_expr(e.arg, env, local)
    elif isinstance(e, If):
        for c in (e.cond, e.then, e.orelse):
            _scope_expr(c, env, local)
    elif isinstance(e, Let):
        _scope_expr(e.bound, env, local)
        _scope_expr(e.body, env, local | free_pattern_vars(e.pat))
    elif isinstance(e, (Init, Infer)):
        need(e.stream, ("stream",), "stream function")
    elif isinstance(e, Unfold):
        need(e.inst, ("val",), "stream instance")
        _scope_expr(e.arg, env, local)
    elif isinstance(e, Sample):
        _scope_expr(e.dist, env, local)
    elif isinstance(e, Observe):
        _scope_expr(e.dist, env, local)
        _scope_expr(e.value, env, local)
    elif isinstance(e, Lambda):
        _scope_expr(e.body, env, local | free_pattern_vars(e.pat))


# ---------------------------------------------------------------------------
# Pretty printing


def pp_pattern(p: Pattern) -> str:
    if isinstance(p, PVar):
        return p.name
    if isinstance(p, PWild):
        return "_"
    if isinstance(p, PUnit):
        return "()"
    return f"({pp_pattern(p.left)}, {pp_pattern(p.right)})"


def _pp_const(c: Const) -> str:
    if c.ty == "unit":
        return "()"
    if c.ty == "bool":
        return "true" if c.value else "false"
    if c.ty == "int":
        return str(c.value)
    text = repr(float(c.value))
    return text if ("." in text or "e" in text) else text + "."


def pp_expr(e: Expr, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(e, Const):
        return _pp_const(e)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Pair):
        return f"({pp_expr(e.left)}, {pp_expr(e.right)})"
    if isinstance(e, (OpApp, FunApp)):
        name = e.op if isinstance(e, OpApp) else e.fn
        arg = pp_expr(e.arg)
        return f"{name} {arg}" if arg.startswith("(") else f"{name} ({arg})"
    if isinstance(e, If):
        return (
            f"if {pp_expr(e.cond)} then ({pp_expr(e.then, indent + 1)})\n"
            f"{pad}else ({pp_expr(e.orelse, indent + 1)})"
        )
    if isinstance(e, Let):
        return (
            f"let {pp_pattern(e.pat)} = ({pp_expr(e.bound, indent + 1)}) in\n"
            f"{pad}{pp_expr(e.body, indent)}"
        )
    if isinstance(e, Init):
        return f"init {e.stream}"
    if isinstance(e, Infer):
        return f"infer {e.stream}"
    if isinstance(e, Unfold):
        return f"unfold ({e.inst}, {pp_expr(e.arg)})"
    if isinstance(e, Sample):
        return f"sample ({pp_expr(e.dist)})"
    if isinstance(e, Observe):
        return f"observe ({pp_expr(e.dist)}, {pp_expr(e.value)})"
    if isinstance(e, Lambda):
        return f"fun {pp_pattern(e.pat)} -> ({pp_expr(e.body, indent + 1)})"
    raise TypeError(f"not an expression: {e!r}")


def pp_decl(d) -> str:
    if isinstance(d, ValDecl):
        return f"val {pp_pattern(d.pat)} = {pp_expr(d.expr, 1)}"
    if isinstance(d, FunDecl):
        return f"val {d.name} = fun {pp_pattern(d.pat)} -> ({pp_expr(d.body, 1)})"
    return (
        f"val {d.name} = stream {{\n"
        f"  init = {pp_expr(d.init, 2)};\n"
        f"  step ({pp_pattern(d.state_pat)}, {pp_pattern(d.arg_pat)}) =\n"
        f"    {pp_expr(d.body, 2)}\n"
        f"}}"
    )


def pp_program(prog: Program) -> str:
    return "\n\n".join(pp_decl(d) for d in prog.decls) + "\n"
