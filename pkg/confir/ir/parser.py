"""
Parser for the textual IR (``.cir``).

Grammar summary (see docs/CIR_SYNTAX.md)::

    global NAME region=public|private size=N
    trusted fn NAME(QUAL r1, ...) -> QUAL
    fn NAME(QUAL r1, ...) -> QUAL { STMT* }
    entry NAME

Statements are separated by newlines or ``;``. Jumps name labels (``NAME:``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from pydantic import ValidationError

from confir.errors import SourceSyntaxError, UnresolvedName

from .constants import MAX_ARGS, NUM_REGS, WORD_MASK
from .program import GlobalDecl, Signature, SourceFunction, SourceProgram, TrustedDecl
from .syntax import (
    BinOp,
    CallT,
    CallU,
    Command,
    Const,
    Expr,
    FuncAddr,
    GlobalRef,
    Goto,
    ICall,
    IfThenElse,
    Ldr,
    Mov,
    Reg,
    Ret,
    Str,
    UnOp,
)
from .taint import TaintLabel

KEYWORDS = frozenset(
    {"fn", "trusted", "global", "entry", "load", "store", "goto", "if", "else",
     "call", "tcall", "icall", "ret", "region", "size", "public", "private"}
)

_TOKEN_RE = re.compile(
    r"""
    (?P<newline>\n)
  | (?P<skip>[ \t\r]+|\#[^\n]*)
  | (?P<number>0[xX][0-9a-fA-F]+|[0-9]+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><<|>>|==|!=|<=|>=|->|[{}()\[\],;:=+\-*/%&|^~!<>@])
    """,
    re.VERBOSE,
)
_REG_RE = re.compile(r"r([0-9]|1[0-5])")

# binding power of each binary operator, higher binds tighter
_PRECEDENCE = {
    "|": 1, "^": 2, "&": 3,
    "==": 4, "!=": 4,
    "<": 5, "<=": 5, ">": 5, ">=": 5,
    "<<": 6, ">>": 6,
    "+": 7, "-": 7,
    "*": 8, "/": 8, "%": 8,
}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        column = pos - line_start + 1
        if match is None:
            raise SourceSyntaxError(f"unexpected character {text[pos]!r}", line, column)
        kind = match.lastgroup
        if kind == "newline":
            tokens.append(Token("newline", "\n", line, column))
            line, line_start = line + 1, match.end()
        elif kind != "skip":
            tokens.append(Token(kind, match.group(), line, column))
        pos = match.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


@dataclass
class _PendingFunction:
    name: str
    signature: Signature
    body: list[Command] = field(default_factory=list)
    labels: list[tuple[str, int]] = field(default_factory=list)
    # (body index, label name, token) for jumps awaiting label resolution
    jumps: list[tuple[int, tuple[str, ...], Token]] = field(default_factory=list)


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.globals: list[GlobalDecl] = []
        self.trusted: list[TrustedDecl] = []
        self.functions: list[_PendingFunction] = []
        self.entry: tuple[str, Token] | None = None
        # name references checked once every declaration has been seen
        self.function_refs: list[tuple[str, Token]] = []
        self.global_refs: list[tuple[str, Token]] = []
        self.calls: list[tuple[str, str, int, Token]] = []

    # -- token helpers --------------------------------------------------------

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message: str, token: Token | None = None) -> SourceSyntaxError:
        token = token or self.current
        return SourceSyntaxError(message, token.line, token.column)

    def advance(self) -> Token:
        token = self.current
        self.pos += 1
        return token

    def at(self, text: str) -> bool:
        return self.current.kind in ("op", "name") and self.current.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            shown = self.current.text or self.current.kind
            raise self.error(f"expected '{text}', found '{shown}'")
        return self.advance()

    def expect_name(self) -> Token:
        if self.current.kind != "name" or self.current.text in KEYWORDS:
            raise self.error(f"expected a name, found '{self.current.text or self.current.kind}'")
        return self.advance()

    def expect_number(self) -> int:
        if self.current.kind != "number":
            raise self.error("expected a number")
        return int(self.advance().text, 0)

    def skip_separators(self) -> None:
        while self.current.kind == "newline" or self.at(";"):
            self.advance()

    def end_statement(self) -> None:
        if self.current.kind == "newline" or self.at(";"):
            self.skip_separators()
        elif not self.at("}"):
            raise self.error(f"expected end of statement, found '{self.current.text}'")

    # -- declarations ---------------------------------------------------------

    def parse(self) -> SourceProgram:
        self.skip_separators()
        while self.current.kind != "eof":
            if self.at("fn"):
                self.parse_function()
            elif self.at("trusted"):
                self.parse_trusted()
            elif self.at("global"):
                self.parse_global()
            elif self.at("entry"):
                token = self.advance()
                self.entry = (self.expect_name().text, token)
            else:
                raise self.error(f"unexpected '{self.current.text}' at top level")
            if self.current.kind != "eof":
                if not (self.current.kind == "newline" or self.at(";")):
                    raise self.error("expected a newline after declaration")
                self.skip_separators()
        if not self.functions:
            raise self.error("program declares no functions")
        return self.resolve()

    def parse_qualifier(self) -> TaintLabel:
        if self.at("public") or self.at("private"):
            return TaintLabel.from_qualifier(self.advance().text)
        raise self.error("expected 'public' or 'private'")

    def parse_signature(self) -> Signature:
        self.expect("(")
        params: list[TaintLabel] = []
        while not self.at(")"):
            if params:
                self.expect(",")
            label = self.parse_qualifier()
            token = self.current
            expected = f"r{len(params) + 1}"
            if token.text != expected:
                raise self.error(f"parameter {len(params) + 1} must be {expected}")
            self.advance()
            params.append(label)
            if len(params) > MAX_ARGS:
                raise self.error(f"at most {MAX_ARGS} parameters", token)
        self.expect(")")
        self.expect("->")
        return Signature(params=tuple(params), ret=self.parse_qualifier())

    def parse_global(self) -> None:
        self.expect("global")
        name = self.expect_name().text
        self.expect("region")
        self.expect("=")
        region = self.parse_qualifier()
        self.expect("size")
        self.expect("=")
        token = self.current
        size = self.expect_number()
        if size <= 0:
            raise self.error("global size must be positive", token)
        self.globals.append(GlobalDecl(name=name, region=region, size=size))

    def parse_trusted(self) -> None:
        self.expect("trusted")
        self.expect("fn")
        name = self.expect_name().text
        self.trusted.append(TrustedDecl(name=name, signature=self.parse_signature()))

    def parse_function(self) -> None:
        self.expect("fn")
        name = self.expect_name().text
        fn = _PendingFunction(name=name, signature=self.parse_signature())
        self.expect("{")
        self.skip_separators()
        while not self.at("}"):
            if self.current.kind == "eof":
                raise self.error(f"unterminated body of '{name}'")
            self.parse_statement(fn)
        close = self.expect("}")
        if not fn.body:
            raise self.error(f"function '{name}' has an empty body", close)
        if fn.body[-1].kind not in ("ret", "goto", "if"):
            raise self.error(f"function '{name}' must end with ret, goto or if", close)
        for label, index in fn.labels:
            if index >= len(fn.body):
                raise self.error(f"label '{label}' does not precede a statement", close)
        self.functions.append(fn)

    # -- statements -----------------------------------------------------------

    def parse_statement(self, fn: _PendingFunction) -> None:
        token = self.current
        if token.kind == "name" and self.tokens[self.pos + 1].text == ":" and (
            token.text not in KEYWORDS
        ):
            self.advance()
            self.advance()
            if any(label == token.text for label, _ in fn.labels):
                raise self.error(f"duplicate label '{token.text}'", token)
            fn.labels.append((token.text, len(fn.body)))
            self.skip_separators()
            return

        if _REG_RE.fullmatch(token.text):
            dst = self.parse_register()
            self.expect("=")
            if self.at("load"):
                self.advance()
                fn.body.append(Ldr(reg=dst, addr=self.parse_bracketed()))
            else:
                fn.body.append(Mov(reg=dst, src=self.parse_expr()))
        elif self.at("store"):
            self.advance()
            addr = self.parse_bracketed()
            self.expect(",")
            fn.body.append(Str(reg=self.parse_register(), addr=addr))
        elif self.at("goto"):
            self.advance()
            fn.jumps.append((len(fn.body), (self.expect_name().text,), token))
            fn.body.append(Goto(target=Const(value=0)))
        elif self.at("if"):
            self.advance()
            cond = self.parse_expr()
            self.expect("goto")
            then_label = self.expect_name().text
            self.expect("else")
            else_label = self.expect_name().text
            fn.jumps.append((len(fn.body), (then_label, else_label), token))
            fn.body.append(IfThenElse(cond=cond, then_pc=Const(value=0), else_pc=Const(value=0)))
        elif self.at("call") or self.at("tcall"):
            kind = self.advance().text
            callee = self.expect_name()
            args = self.parse_args()
            self.calls.append((kind, callee.text, len(args), callee))
            command = CallU if kind == "call" else CallT
            fn.body.append(command(func=callee.text, args=args))
        elif self.at("icall"):
            self.advance()
            target = self.parse_expr()
            args = self.parse_args()
            ret_taint = TaintLabel.H
            if self.at("->"):
                self.advance()
                ret_taint = self.parse_qualifier()
            fn.body.append(ICall(target=target, args=args, ret_taint=ret_taint))
        elif self.at("ret"):
            self.advance()
            fn.body.append(Ret())
        else:
            raise self.error(f"unknown statement '{token.text or token.kind}'")
        self.end_statement()

    def parse_register(self) -> int:
        token = self.current
        match = _REG_RE.fullmatch(token.text) if token.kind == "name" else None
        if match is None:
            raise self.error(f"expected a register r0..r{NUM_REGS - 1}")
        self.advance()
        return int(match.group(1))

    def parse_bracketed(self) -> Expr:
        self.expect("[")
        e = self.parse_expr()
        self.expect("]")
        return e

    def parse_args(self) -> tuple[Expr, ...]:
        self.expect("(")
        args: list[Expr] = []
        while not self.at(")"):
            if args:
                self.expect(",")
            args.append(self.parse_expr())
        if len(args) > MAX_ARGS:
            raise self.error(f"at most {MAX_ARGS} arguments")
        self.expect(")")
        return tuple(args)

    # -- expressions (precedence climbing) ------------------------------------

    def parse_expr(self, min_power: int = 1) -> Expr:
        left = self.parse_unary()
        while self.current.kind == "op" and _PRECEDENCE.get(self.current.text, 0) >= min_power:
            op = self.advance().text
            right = self.parse_expr(_PRECEDENCE[op] + 1)
            left = BinOp(op=op, left=left, right=right)
        return left

    def parse_unary(self) -> Expr:
        if self.current.kind == "op" and self.current.text in ("-", "~", "!"):
            op = self.advance().text
            literal = self.current.kind == "number"
            operand = self.parse_unary()
            if op == "-" and literal and isinstance(operand, Const):
                return Const(value=-operand.value & WORD_MASK)
            return UnOp(op=op, operand=operand)
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        token = self.current
        if token.kind == "number":
            value = int(self.advance().text, 0)
            if value > WORD_MASK:
                raise self.error("constant does not fit in 64 bits", token)
            return Const(value=value)
        if self.at("("):
            self.advance()
            e = self.parse_expr()
            self.expect(")")
            return e
        if self.at("&"):
            self.advance()
            name = self.expect_name()
            self.function_refs.append((name.text, name))
            return FuncAddr(name=name.text)
        if self.at("@"):
            self.advance()
            name = self.expect_name()
            self.global_refs.append((name.text, name))
            return GlobalRef(name=name.text)
        if token.kind == "name" and _REG_RE.fullmatch(token.text):
            return Reg(index=self.parse_register())
        raise self.error(f"expected an expression, found '{token.text or token.kind}'")

    # -- resolution -----------------------------------------------------------

    def resolve(self) -> SourceProgram:
        untrusted = {fn.name: fn.signature for fn in self.functions}
        trusted = {t.name: t.signature for t in self.trusted}
        declared_globals = {g.name for g in self.globals}

        for name, token in self.function_refs:
            if name not in untrusted and name not in trusted:
                raise UnresolvedName(name, token.line, token.column)
        for name, token in self.global_refs:
            if name not in declared_globals:
                raise UnresolvedName(name, token.line, token.column)
        for kind, name, arity, token in self.calls:
            table, other = (untrusted, trusted) if kind == "call" else (trusted, untrusted)
            if name not in table:
                if name in other:
                    wanted = "tcall" if kind == "call" else "call"
                    raise self.error(f"'{name}' must be invoked with {wanted}", token)
                raise UnresolvedName(name, token.line, token.column)
            expected = len(table[name].params)
            if arity != expected:
                raise self.error(f"'{name}' takes {expected} arguments, got {arity}", token)

        functions = []
        for fn in self.functions:
            label_index = dict(fn.labels)
            body = list(fn.body)
            for index, names, token in fn.jumps:
                targets = []
                for label in names:
                    if label not in label_index:
                        raise UnresolvedName(label, token.line, token.column)
                    targets.append(Const(value=label_index[label]))
                if len(targets) == 1:
                    body[index] = Goto(target=targets[0])
                else:
                    body[index] = body[index].model_copy(
                        update={"then_pc": targets[0], "else_pc": targets[1]}
                    )
            functions.append(
                SourceFunction(
                    name=fn.name, signature=fn.signature, body=tuple(body), labels=tuple(fn.labels)
                )
            )

        if self.entry is not None:
            entry, token = self.entry
            if entry not in untrusted:
                raise UnresolvedName(entry, token.line, token.column)
        else:
            entry = "main" if "main" in untrusted else self.functions[0].name

        try:
            return SourceProgram(
                globals=tuple(self.globals),
                trusted=tuple(self.trusted),
                functions=tuple(functions),
                entry=entry,
            )
        except ValidationError as exc:
            raise SourceSyntaxError(str(exc.errors()[0]["msg"]), 1, 1) from exc


def parse_source(text: str) -> SourceProgram:
    """Parse ``.cir`` text into a resolved :class:`SourceProgram`.

    Raises:
        SourceSyntaxError: malformed text, with line and column.
        UnresolvedName: a referenced function, global or label is not declared.
    """
    return _Parser(text).parse()
