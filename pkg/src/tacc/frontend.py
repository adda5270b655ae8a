"""Lexer, parser, and AST for the tensor algebra DSL.

The surface language is straight-line tensor statements with C-like lexical
rules (`//` line comments, `;` terminators). Three statement forms:

    ilabel    ::= "IndexLabel" id-list "=" range ";"
    range     ::= "[" int "]" | "[" int ":" int ":" int "]"
    tensor    ::= "Tensor" "<" element-type ">" id "(" "[" id-seq "]" ")" ";"
    tensor-op ::= label-tensor assign-op op-rhs ";"

where

    id-list      ::= id | "[" id-seq "]"
    id-seq       ::= id ("," id)*
    element-type ::= "int" | "float" | "double"
    assign-op    ::= "=" | "+=" | "-="
    op-rhs       ::= alpha | [alpha "*"] label-tensor ("*" label-tensor)*
    label-tensor ::= id "[" id-seq "]"
    alpha        ::= numeric literal

`[N]` is shorthand for the range (0, N, 1). A bare alpha rhs is a tensor
fill; a single labeled tensor is a copy (with permutation); two or more are
a contraction chain. Chains parse into a flat operand list; choosing a tree
shape for them is the planner's job, not the parser's.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import Span, TaSyntaxError, UnknownCharacter, UnterminatedLiteral

KEYWORDS = ("IndexLabel", "Tensor")
ELEMENT_TYPES = ("int", "float", "double")


class TokKind(enum.Enum):
    KW = "keyword"
    ID = "identifier"
    INT = "int literal"
    FLOAT = "float literal"
    LBRACKET = "'['"
    RBRACKET = "']'"
    LPAREN = "'('"
    RPAREN = "')'"
    LANGLE = "'<'"
    RANGLE = "'>'"
    COMMA = "','"
    COLON = "':'"
    SEMI = "';'"
    ASSIGN = "'='"
    PLUS_ASSIGN = "'+='"
    MINUS_ASSIGN = "'-='"
    STAR = "'*'"
    EOF = "end of input"


_PUNCT = {
    "[": TokKind.LBRACKET,
    "]": TokKind.RBRACKET,
    "(": TokKind.LPAREN,
    ")": TokKind.RPAREN,
    "<": TokKind.LANGLE,
    ">": TokKind.RANGLE,
    ",": TokKind.COMMA,
    ":": TokKind.COLON,
    ";": TokKind.SEMI,
    "*": TokKind.STAR,
}


@dataclass(frozen=True)
class Token:
    kind: TokKind
    text: str
    span: Span
    value: int | float | None = None

    def __str__(self) -> str:
        if self.kind in (TokKind.ID, TokKind.INT, TokKind.FLOAT, TokKind.KW):
            return f"{self.kind.value} {self.text!r}"
        return self.kind.value


def tokenize(source: str) -> list[Token]:
    """Lex the whole input into a token list ending with an EOF token."""
    tokens: list[Token] = []
    line = 1
    col = 1
    i = 0
    n = len(source)

    def span(start_col: int, end_col: int) -> Span:
        return Span(line, start_col, end_col)

    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "/":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start = i
        start_col = col
        if ch.isalpha() or ch == "_":
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            col += i - start
            text = source[start:i]
            kind = TokKind.KW if text in KEYWORDS else TokKind.ID
            tokens.append(Token(kind, text, span(start_col, col)))
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and source[i + 1].isdigit()):
            # '-' starts a literal here; the only other '-' use is '-='
            i += 1
            while i < n and source[i].isdigit():
                i += 1
            is_float = False
            if i < n and source[i] == ".":
                is_float = True
                i += 1
                if i >= n or not source[i].isdigit():
                    col += i - start
                    raise UnterminatedLiteral(source[start:i], span(start_col, col))
                while i < n and source[i].isdigit():
                    i += 1
            if i < n and source[i] in "eE":
                is_float = True
                i += 1
                if i < n and source[i] in "+-":
                    i += 1
                if i >= n or not source[i].isdigit():
                    col += i - start
                    raise UnterminatedLiteral(source[start:i], span(start_col, col))
                while i < n and source[i].isdigit():
                    i += 1
            col += i - start
            text = source[start:i]
            if is_float:
                tokens.append(Token(TokKind.FLOAT, text, span(start_col, col), float(text)))
            else:
                tokens.append(Token(TokKind.INT, text, span(start_col, col), int(text)))
            continue
        if ch in "+-" and i + 1 < n and source[i + 1] == "=":
            i += 2
            col += 2
            kind = TokKind.PLUS_ASSIGN if ch == "+" else TokKind.MINUS_ASSIGN
            tokens.append(Token(kind, ch + "=", span(start_col, col)))
            continue
        if ch == "=":
            i += 1
            col += 1
            tokens.append(Token(TokKind.ASSIGN, "=", span(start_col, col)))
            continue
        if ch in _PUNCT:
            i += 1
            col += 1
            tokens.append(Token(_PUNCT[ch], ch, span(start_col, col)))
            continue
        raise UnknownCharacter(ch, span(start_col, start_col + 1))

    tokens.append(Token(TokKind.EOF, "", Span(line, col, col)))
    return tokens


# ---------------------------------------------------------------- AST types


@dataclass(frozen=True)
class IndexLabelDecl:
    names: tuple[str, ...]
    range: tuple[int, int, int]
    span: Span


@dataclass(frozen=True)
class TensorDeclStmt:
    name: str
    element_type: str
    dim_labels: tuple[str, ...]
    span: Span


@dataclass(frozen=True)
class LabeledTensorRef:
    tensor_name: str
    labels: tuple[str, ...]
    span: Span


@dataclass(frozen=True)
class ScalarConst:
    value: float


@dataclass(frozen=True)
class TensorExpr:
    """rhs of the form [alpha *] T1 [* T2 ...]; alpha defaults to 1."""

    alpha: float
    operands: tuple[LabeledTensorRef, ...]


@dataclass(frozen=True)
class TensorOpStmt:
    lhs: LabeledTensorRef
    assign_op: str
    rhs: ScalarConst | TensorExpr
    span: Span


Stmt = IndexLabelDecl | TensorDeclStmt | TensorOpStmt


@dataclass(frozen=True)
class SourceProgram:
    statements: tuple[Stmt, ...] = field(default_factory=tuple)


# ------------------------------------------------------------------ parser


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind is not TokKind.EOF:
            self.pos += 1
        return tok

    def expect(self, kind: TokKind, expected: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind is not kind:
            raise TaSyntaxError(tok.span, expected or kind.value, str(tok))
        return self.advance()

    def fail(self, expected: str) -> TaSyntaxError:
        tok = self.peek()
        return TaSyntaxError(tok.span, expected, str(tok))

    # statements

    def program(self) -> SourceProgram:
        statements: list[Stmt] = []
        while self.peek().kind is not TokKind.EOF:
            statements.append(self.statement())
        return SourceProgram(tuple(statements))

    def statement(self) -> Stmt:
        tok = self.peek()
        if tok.kind is TokKind.KW and tok.text == "IndexLabel":
            return self.index_label_decl()
        if tok.kind is TokKind.KW and tok.text == "Tensor":
            return self.tensor_decl()
        if tok.kind is TokKind.ID:
            return self.tensor_op()
        raise self.fail("a statement (IndexLabel, Tensor, or tensor operation)")

    def index_label_decl(self) -> IndexLabelDecl:
        start = self.expect(TokKind.KW)
        names = self.id_list()
        self.expect(TokKind.ASSIGN)
        rng = self.range_literal()
        end = self.expect(TokKind.SEMI)
        return IndexLabelDecl(names, rng, _join(start.span, end.span))

    def id_list(self) -> tuple[str, ...]:
        if self.peek().kind is TokKind.ID:
            return (self.advance().text,)
        self.expect(TokKind.LBRACKET, "an identifier or '['")
        names = [self.expect(TokKind.ID, "an identifier").text]
        while self.peek().kind is TokKind.COMMA:
            self.advance()
            names.append(self.expect(TokKind.ID, "an identifier").text)
        self.expect(TokKind.RBRACKET)
        return tuple(names)

    def range_literal(self) -> tuple[int, int, int]:
        self.expect(TokKind.LBRACKET, "a range '[...]'")
        first = self.expect(TokKind.INT, "an integer")
        if self.peek().kind is TokKind.RBRACKET:
            close = self.advance()
            begin, end, inc = 0, int(first.value), 1
        else:
            self.expect(TokKind.COLON, "':' or ']'")
            second = self.expect(TokKind.INT, "an integer")
            self.expect(TokKind.COLON)
            third = self.expect(TokKind.INT, "an integer")
            close = self.expect(TokKind.RBRACKET)
            begin, end, inc = int(first.value), int(second.value), int(third.value)
            if inc < 1:
                raise TaSyntaxError(close.span, "increment >= 1", str(inc))
        if end <= begin:
            raise TaSyntaxError(close.span, "range end > begin", f"[{begin}:{end}:{inc}]")
        return begin, end, inc

    def tensor_decl(self) -> TensorDeclStmt:
        start = self.expect(TokKind.KW)
        self.expect(TokKind.LANGLE)
        type_tok = self.expect(TokKind.ID, "an element type (int|float|double)")
        if type_tok.text not in ELEMENT_TYPES:
            raise TaSyntaxError(type_tok.span, "an element type (int|float|double)", str(type_tok))
        self.expect(TokKind.RANGLE)
        name = self.expect(TokKind.ID, "a tensor name")
        self.expect(TokKind.LPAREN)
        self.expect(TokKind.LBRACKET, "'[' starting the dimension labels")
        dims = [self.expect(TokKind.ID, "an index label name").text]
        while self.peek().kind is TokKind.COMMA:
            self.advance()
            dims.append(self.expect(TokKind.ID, "an index label name").text)
        self.expect(TokKind.RBRACKET)
        self.expect(TokKind.RPAREN)
        end = self.expect(TokKind.SEMI)
        return TensorDeclStmt(name.text, type_tok.text, tuple(dims), _join(start.span, end.span))

    def labeled_tensor(self) -> LabeledTensorRef:
        name = self.expect(TokKind.ID, "a tensor name")
        self.expect(TokKind.LBRACKET, "'[' starting the label list")
        labels = [self.expect(TokKind.ID, "an index label name").text]
        while self.peek().kind is TokKind.COMMA:
            self.advance()
            labels.append(self.expect(TokKind.ID, "an index label name").text)
        close = self.expect(TokKind.RBRACKET)
        return LabeledTensorRef(name.text, tuple(labels), _join(name.span, close.span))

    def tensor_op(self) -> TensorOpStmt:
        lhs = self.labeled_tensor()
        op_tok = self.peek()
        if op_tok.kind is TokKind.ASSIGN:
            op = "="
        elif op_tok.kind is TokKind.PLUS_ASSIGN:
            op = "+="
        elif op_tok.kind is TokKind.MINUS_ASSIGN:
            op = "-="
        else:
            raise self.fail("'=', '+=', or '-='")
        self.advance()
        rhs = self.op_rhs()
        end = self.expect(TokKind.SEMI)
        return TensorOpStmt(lhs, op, rhs, _join(lhs.span, end.span))

    def op_rhs(self) -> ScalarConst | TensorExpr:
        tok = self.peek()
        alpha = 1.0
        if tok.kind in (TokKind.INT, TokKind.FLOAT):
            self.advance()
            if self.peek().kind is TokKind.SEMI:
                return ScalarConst(float(tok.value))
            self.expect(TokKind.STAR, "'*' or ';'")
            alpha = float(tok.value)
        elif tok.kind is not TokKind.ID:
            raise self.fail("a scalar value or a labeled tensor")
        operands = [self.labeled_tensor()]
        while self.peek().kind is TokKind.STAR:
            self.advance()
            operands.append(self.labeled_tensor())
        return TensorExpr(alpha, tuple(operands))


def _join(a: Span, b: Span) -> Span:
    return Span(a.line, a.col, b.end_col if b.line == a.line else a.end_col)


def parse(tokens: list[Token] | str) -> SourceProgram:
    """Parse a token list (or source text, for convenience) into an AST."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    return _Parser(tokens).program()


# ------------------------------------------------- printing and round-trip


def _fmt_float(v: float) -> str:
    text = repr(v)
    return text


def pretty_print(program: SourceProgram) -> str:
    """Emit canonical source text that reparses to a structurally equal AST."""
    lines = []
    for stmt in program.statements:
        if isinstance(stmt, IndexLabelDecl):
            names = stmt.names[0] if len(stmt.names) == 1 else "[" + ", ".join(stmt.names) + "]"
            b, e, inc = stmt.range
            lines.append(f"IndexLabel {names} = [{b}:{e}:{inc}];")
        elif isinstance(stmt, TensorDeclStmt):
            dims = ", ".join(stmt.dim_labels)
            lines.append(f"Tensor<{stmt.element_type}> {stmt.name}([{dims}]);")
        elif isinstance(stmt, TensorOpStmt):
            lhs = f"{stmt.lhs.tensor_name}[{', '.join(stmt.lhs.labels)}]"
            if isinstance(stmt.rhs, ScalarConst):
                rhs = _fmt_float(stmt.rhs.value)
            else:
                parts = [_fmt_float(stmt.rhs.alpha)]
                parts += [f"{t.tensor_name}[{', '.join(t.labels)}]" for t in stmt.rhs.operands]
                rhs = " * ".join(parts)
            lines.append(f"{lhs} {stmt.assign_op} {rhs};")
        else:
            raise AssertionError(f"unknown statement type {type(stmt)}")
    return "\n".join(lines) + ("\n" if lines else "")


def strip_spans(program: SourceProgram) -> SourceProgram:
    """Structural copy with all spans zeroed, for span-insensitive comparison."""
    zero = Span(0, 0, 0)
    out: list[Stmt] = []
    for stmt in program.statements:
        if isinstance(stmt, IndexLabelDecl):
            out.append(IndexLabelDecl(stmt.names, stmt.range, zero))
        elif isinstance(stmt, TensorDeclStmt):
            out.append(TensorDeclStmt(stmt.name, stmt.element_type, stmt.dim_labels, zero))
        else:
            lhs = LabeledTensorRef(stmt.lhs.tensor_name, stmt.lhs.labels, zero)
            rhs = stmt.rhs
            if isinstance(rhs, TensorExpr):
                rhs = TensorExpr(rhs.alpha, tuple(
                    LabeledTensorRef(t.tensor_name, t.labels, zero) for t in rhs.operands))
            out.append(TensorOpStmt(lhs, stmt.assign_op, rhs, zero))
    return SourceProgram(tuple(out))


def format_ast(program: SourceProgram) -> str:
    """Indented AST dump for `--emit ast`."""
    lines = ["SourceProgram"]
    for stmt in program.statements:
        at = f"  @{stmt.span}"
        if isinstance(stmt, IndexLabelDecl):
            b, e, inc = stmt.range
            lines.append(f"  IndexLabelDecl names=[{', '.join(stmt.names)}] range=({b}, {e}, {inc}){at}")
        elif isinstance(stmt, TensorDeclStmt):
            lines.append(f"  TensorDeclStmt name={stmt.name} type={stmt.element_type} "
                         f"dims=[{', '.join(stmt.dim_labels)}]{at}")
        else:
            lines.append(f"  TensorOpStmt op='{stmt.assign_op}'{at}")
            lhs = stmt.lhs
            lines.append(f"    lhs: {lhs.tensor_name}[{', '.join(lhs.labels)}]")
            if isinstance(stmt.rhs, ScalarConst):
                lines.append(f"    rhs: ScalarConst {_fmt_float(stmt.rhs.value)}")
            else:
                lines.append(f"    rhs: TensorExpr alpha={_fmt_float(stmt.rhs.alpha)}")
                for t in stmt.rhs.operands:
                    lines.append(f"      {t.tensor_name}[{', '.join(t.labels)}]")
    return "\n".join(lines) + "\n"
