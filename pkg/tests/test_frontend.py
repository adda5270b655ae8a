"""Lexer and parser unit tests."""

from __future__ import annotations

import pytest

from tacc.errors import TaSyntaxError, UnknownCharacter, UnterminatedLiteral
from tacc.frontend import (IndexLabelDecl, ScalarConst, SourceProgram,
                           TensorDeclStmt, TensorExpr, TensorOpStmt, TokKind,
                           format_ast, parse, pretty_print, strip_spans,
                           tokenize)


def kinds(source: str) -> list[TokKind]:
    return [t.kind for t in tokenize(source) if t.kind is not TokKind.EOF]


def test_tokenize_index_label_decl():
    K = TokKind
    assert kinds("IndexLabel i = [4];") == [
        K.KW, K.ID, K.ASSIGN, K.LBRACKET, K.INT, K.RBRACKET, K.SEMI]


def test_tokenize_tensor_decl():
    K = TokKind
    assert kinds("Tensor<double> A([i,j]);") == [
        K.KW, K.LANGLE, K.ID, K.RANGLE, K.ID, K.LPAREN, K.LBRACKET,
        K.ID, K.COMMA, K.ID, K.RBRACKET, K.RPAREN, K.SEMI]


def test_tokenize_contraction_statement():
    # hand count: C [ a , b ] += 2.0 * A [ a , k ] * B [ k , b ] ;
    toks = tokenize("C[a,b] += 2.0 * A[a,k] * B[k,b];")
    assert toks[-1].kind is TokKind.EOF
    assert len(toks) - 1 == 23
    assert toks[6].kind is TokKind.PLUS_ASSIGN
    assert toks[7].kind is TokKind.FLOAT
    assert toks[7].value == 2.0


def test_tokenize_literals_and_spans():
    toks = tokenize("x = -3;\ny = 1e-3;")
    assert toks[2].kind is TokKind.INT and toks[2].value == -3
    assert toks[6].kind is TokKind.FLOAT and toks[6].value == 1e-3
    assert toks[4].span.line == 2  # 'y' starts the second line
    assert toks[0].span == toks[0].span.__class__(1, 1, 2)


def test_tokenize_strips_comments_and_whitespace():
    src = "// full line\nA[i] = 1.0; // trailing\n"
    K = TokKind
    assert kinds(src) == [K.ID, K.LBRACKET, K.ID, K.RBRACKET, K.ASSIGN,
                          K.FLOAT, K.SEMI]


def test_tokenize_unknown_character_span():
    with pytest.raises(UnknownCharacter) as info:
        tokenize("A[i] ? 1;")
    assert info.value.char == "?"
    assert info.value.span.line == 1
    assert info.value.span.col == 6


@pytest.mark.parametrize("bad", ["1.", "2e", "2e+", "-7.;"])
def test_tokenize_malformed_literal(bad):
    with pytest.raises(UnterminatedLiteral):
        tokenize(f"A[i] = {bad}")


def test_parse_index_label_forms():
    program = parse("IndexLabel i = [4]; IndexLabel [a, b] = [2:10:2];")
    first, second = program.statements
    assert isinstance(first, IndexLabelDecl)
    assert first.names == ("i",) and first.range == (0, 4, 1)
    assert second.names == ("a", "b") and second.range == (2, 10, 2)


def test_parse_tensor_decl():
    (stmt,) = parse("Tensor<float> Grid([x, y, z]);").statements
    assert isinstance(stmt, TensorDeclStmt)
    assert stmt.name == "Grid"
    assert stmt.element_type == "float"
    assert stmt.dim_labels == ("x", "y", "z")


def test_parse_fill_and_copy_and_chain():
    program = parse(
        "A[i, j] = 2.5;"
        "B[j, i] -= 0.5 * A[i, j];"
        "D[i, l] += A[i, j] * B[j, k] * C[k, l];")
    fill, copy, chain = program.statements
    assert isinstance(fill, TensorOpStmt) and fill.assign_op == "="
    assert fill.rhs == ScalarConst(2.5)
    assert copy.assign_op == "-="
    assert isinstance(copy.rhs, TensorExpr)
    assert copy.rhs.alpha == 0.5
    assert [op.tensor_name for op in copy.rhs.operands] == ["A"]
    assert chain.assign_op == "+="
    assert chain.rhs.alpha == 1.0
    assert [op.tensor_name for op in chain.rhs.operands] == ["A", "B", "C"]
    assert chain.rhs.operands[1].labels == ("j", "k")


def test_parse_reports_expected_and_found():
    with pytest.raises(TaSyntaxError) as info:
        parse("Tensor<quad> A([i]);")
    assert "int|float|double" in info.value.expected
    assert info.value.span.line == 1
    with pytest.raises(TaSyntaxError) as info:
        parse("A[i] = 1.0")
    assert "';'" in info.value.expected


def test_parse_range_validation():
    with pytest.raises(TaSyntaxError):
        parse("IndexLabel i = [5:5:1];")
    with pytest.raises(TaSyntaxError):
        parse("IndexLabel i = [0:4:0];")


def test_pretty_print_round_trip_multistatement():
    src = ("IndexLabel [i, j] = [8];\n"
           "IndexLabel k = [1:5:2];\n"
           "Tensor<double> A([i, k]);\n"
           "Tensor<double> B([k, j]);\n"
           "Tensor<double> C([i, j]);\n"
           "A[i, k] = 1.0;\n"
           "B[k, j] = -2.0;\n"
           "C[i, j] += 0.25 * A[i, k] * B[k, j];\n")
    program = parse(src)
    echoed = parse(pretty_print(program))
    assert strip_spans(echoed) == strip_spans(program)
    # printing is a fixed point once spans are canonical
    assert pretty_print(echoed) == pretty_print(program)


def test_strip_spans_equates_reformatted_sources():
    a = parse("A[i,j]=1.0;")
    b = parse("A[ i , j ]   =\n 1.0 ;")
    assert a != b
    assert strip_spans(a) == strip_spans(b)


def test_format_ast_shape():
    text = format_ast(parse("C[i, j] = A[i, k] * B[k, j];"))
    assert "TensorOp" in text
    assert "C[i, j]" in text or "C" in text
    assert text.count("operand") >= 2 or text.count("A") >= 1


def test_parse_empty_source():
    assert parse("") == SourceProgram(())
    assert parse("// nothing but comments\n") == SourceProgram(())
