"""Policy condition language.

A small boolean expression language over subject, object and request
attributes::

    expr       = or ;  or = and { "||" and } ;  and = unary { "&&" unary } ;
    unary      = "!" unary | primary ;
    primary    = "(" expr ")" | "true" | "false" | "exists" "(" attr ")" | comparison ;
    comparison = operand ("==" | "!=" | "<" | "<=" | ">" | ">=") operand ;
    operand    = attr | literal ;
    attr       = ("subject" | "object" | "request") "." identifier ;

Evaluation is total. A comparison that references a missing attribute, or
compares values of incomparable types, is false; the boolean connectives
then operate on those two-valued results.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Union

from . import errors
from .model import INT64_MAX, INT64_MIN

NAMESPACES = ("subject", "object", "request")
COMPARISON_OPS = ("==", "!=", "<", "<=", ">", ">=")
DEFAULT_DEPTH_LIMIT = 64


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Attr:
    namespace: str
    name: str


@dataclass(frozen=True)
class Literal:
    value: Any
    # Python treats 1 == 1.0 == True; the type tag keeps the AST honest.
    kind: str = ""

    def __post_init__(self):
        if not self.kind:
            object.__setattr__(self, "kind", _literal_kind(self.value))


@dataclass(frozen=True)
class Compare:
    op: str
    left: Union[Attr, Literal]
    right: Union[Attr, Literal]


@dataclass(frozen=True)
class Exists:
    attr: Attr


@dataclass(frozen=True)
class Not:
    operand: "Node"


@dataclass(frozen=True)
class And:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Or:
    left: "Node"
    right: "Node"


Node = Union[Const, Compare, Exists, Not, And, Or]


def _literal_kind(value: Any) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "text"
    raise TypeError(f"unsupported literal {value!r}")


@dataclass(frozen=True)
class Condition:
    source: str
    ast: Node

    @property
    def canonical(self) -> str:
        return to_text(self.ast)

    def evaluate(self, subject_attrs, object_attrs, request_attrs) -> bool:
        return evaluate(self, EvaluationContext(subject_attrs, object_attrs, request_attrs))


@dataclass(frozen=True)
class EvaluationContext:
    subject_attrs: Mapping[str, Any]
    object_attrs: Mapping[str, Any]
    request_attrs: Mapping[str, Any]

    def lookup(self, attr: Attr):
        if attr.namespace == "subject":
            bag = self.subject_attrs
        elif attr.namespace == "object":
            bag = self.object_attrs
        else:
            bag = self.request_attrs
        return bag.get(attr.name, _MISSING)


# --------------------------------------------------------------------------
# Lexer
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>-?(?:\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+))
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<word>[A-Za-z_][A-Za-z0-9_.-]*)
  | (?P<op>\|\||&&|==|!=|<=|>=|<|>|!|\(|\))
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


@dataclass(frozen=True)
class Token:
    kind: str  # number | string | word | op | eof
    text: str
    pos: int


def _line_col(source: str, pos: int) -> tuple[int, int]:
    line = source.count("\n", 0, pos) + 1
    col = pos - (source.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _syntax_error(source: str, pos: int, msg: str, cls=errors.ConditionSyntaxError):
    line, col = _line_col(source, pos)
    return cls(f"{msg} at line {line}, column {col}", line=line, column=col)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise _syntax_error(source, pos, f"unexpected character {source[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(source)))
    return tokens


def _unquote(source: str, tok: Token) -> str:
    body = tok.text[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            esc = body[i + 1]
            if esc not in _ESCAPES:
                raise _syntax_error(source, tok.pos + i + 1, f"unknown escape \\{esc}")
            out.append(_ESCAPES[esc])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def quote(text: str) -> str:
    return '"' + (
        text.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\t", "\\t")
        .replace("\r", "\\r")
    ) + '"'


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Parser:
    def __init__(self, source: str, depth_limit: int):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0
        self.depth = 0
        self.depth_limit = depth_limit

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def error(self, tok: Token, msg: str):
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return _syntax_error(self.source, tok.pos, f"{msg}, found {found}")

    def expect_op(self, text: str) -> Token:
        tok = self.next()
        if tok.kind != "op" or tok.text != text:
            raise self.error(tok, f"expected {text!r}")
        return tok

    def enter(self, tok: Token):
        # Canonical text nests one level deeper than its AST.
        self.depth += 1
        if self.depth > self.depth_limit + 1:
            raise _syntax_error(
                self.source, tok.pos,
                f"expression nesting exceeds depth limit {self.depth_limit}",
                errors.ConditionTooDeep,
            )

    def parse(self) -> Node:
        node = self.parse_or()
        tok = self.peek()
        if tok.kind != "eof":
            raise self.error(tok, "expected end of condition")
        return node

    def parse_or(self) -> Node:
        self.enter(self.peek())
        node = self.parse_and()
        while self.peek().kind == "op" and self.peek().text == "||":
            self.next()
            node = Or(node, self.parse_and())
        self.depth -= 1
        return node

    def parse_and(self) -> Node:
        node = self.parse_unary()
        while self.peek().kind == "op" and self.peek().text == "&&":
            self.next()
            node = And(node, self.parse_unary())
        return node

    def parse_unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "!":
            self.next()
            self.enter(tok)
            node = Not(self.parse_unary())
            self.depth -= 1
            return node
        return self.parse_primary()

    def parse_primary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "(":
            self.next()
            node = self.parse_or()
            self.expect_op(")")
            return node
        if tok.kind == "word" and tok.text == "exists":
            self.next()
            self.expect_op("(")
            attr_tok = self.next()
            attr = self.attr(attr_tok)
            self.expect_op(")")
            return Exists(attr)
        if tok.kind == "word" and tok.text in ("true", "false"):
            follower = self.peek(1)
            if not (follower.kind == "op" and follower.text in COMPARISON_OPS):
                self.next()
                return Const(tok.text == "true")
        return self.comparison()

    def comparison(self) -> Compare:
        left = self.operand()
        tok = self.next()
        if tok.kind != "op" or tok.text not in COMPARISON_OPS:
            raise self.error(tok, "expected comparison operator")
        right = self.operand()
        return Compare(tok.text, left, right)

    def operand(self) -> Union[Attr, Literal]:
        tok = self.next()
        if tok.kind == "string":
            return Literal(_unquote(self.source, tok))
        if tok.kind == "number":
            return Literal(self.number(tok))
        if tok.kind == "word":
            if tok.text in ("true", "false"):
                return Literal(tok.text == "true")
            return self.attr(tok)
        raise self.error(tok, "expected attribute reference or literal")

    def number(self, tok: Token):
        text = tok.text
        if re.fullmatch(r"-?\d+", text):
            value = int(text)
            if not INT64_MIN <= value <= INT64_MAX:
                raise _syntax_error(self.source, tok.pos, "integer literal out of 64-bit range")
            return value
        value = float(text)
        if not math.isfinite(value):
            raise _syntax_error(self.source, tok.pos, "float literal out of range")
        return value

    def attr(self, tok: Token) -> Attr:
        if tok.kind != "word" or tok.text in ("true", "false", "exists"):
            raise self.error(tok, "expected attribute reference")
        namespace, dot, name = tok.text.partition(".")
        if not dot:
            raise self.error(tok, "expected namespace-qualified attribute")
        if namespace not in NAMESPACES:
            raise _syntax_error(
                self.source, tok.pos,
                f"unknown namespace {namespace!r} (expected subject, object or request)",
                errors.UnknownNamespace,
            )
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.-]*", name):
            raise self.error(tok, "invalid attribute name")
        return Attr(namespace, name)


def parse(source: str, depth_limit: int = DEFAULT_DEPTH_LIMIT) -> Condition:
    """Parse condition source text.

    Raises ``ConditionSyntaxError`` (with ``line``/``column`` detail),
    ``UnknownNamespace`` or ``ConditionTooDeep``.
    """
    if not isinstance(source, str):
        raise errors.ConditionSyntaxError("condition must be text")
    ast = _Parser(source, depth_limit).parse()
    if condition_depth(ast) > depth_limit:
        raise errors.ConditionTooDeep(
            f"condition depth exceeds limit {depth_limit}", limit=depth_limit
        )
    return Condition(source, ast)


# --------------------------------------------------------------------------
# Canonical text
# --------------------------------------------------------------------------


def _operand_text(node) -> str:
    if isinstance(node, Attr):
        return f"{node.namespace}.{node.name}"
    value = node.value
    if node.kind == "bool":
        return "true" if value else "false"
    if node.kind == "text":
        return quote(value)
    return repr(value)


def to_text(node: Node) -> str:
    if isinstance(node, Const):
        return "true" if node.value else "false"
    if isinstance(node, Compare):
        return f"({_operand_text(node.left)} {node.op} {_operand_text(node.right)})"
    if isinstance(node, Exists):
        return f"exists({_operand_text(node.attr)})"
    if isinstance(node, Not):
        return "!" + to_text(node.operand)
    if isinstance(node, And):
        return f"({to_text(node.left)} && {to_text(node.right)})"
    if isinstance(node, Or):
        return f"({to_text(node.left)} || {to_text(node.right)})"
    raise TypeError(f"not a condition node: {node!r}")


def canonicalize(cond: Union[Condition, Node]) -> str:
    return to_text(cond.ast if isinstance(cond, Condition) else cond)


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

_MISSING = object()


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def compare_values(op: str, left, right) -> bool:
    """Apply a comparison under the collapse rules (absent or mismatched -> False)."""
    if left is _MISSING or right is _MISSING:
        return False
    if _is_number(left) and _is_number(right):
        if isinstance(left, int) != isinstance(right, int):
            left, right = float(left), float(right)
    elif isinstance(left, str) and isinstance(right, str):
        pass
    elif isinstance(left, bool) and isinstance(right, bool):
        if op not in ("==", "!="):
            return False
    else:
        return False
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise ValueError(op)


def _operand_value(node, ctx: EvaluationContext):
    if isinstance(node, Attr):
        return ctx.lookup(node)
    return node.value


def _eval(node: Node, ctx: EvaluationContext) -> bool:
    if isinstance(node, Compare):
        return compare_values(node.op, _operand_value(node.left, ctx), _operand_value(node.right, ctx))
    if isinstance(node, And):
        return _eval(node.left, ctx) and _eval(node.right, ctx)
    if isinstance(node, Or):
        return _eval(node.left, ctx) or _eval(node.right, ctx)
    if isinstance(node, Not):
        return not _eval(node.operand, ctx)
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Exists):
        return ctx.lookup(node.attr) is not _MISSING
    raise TypeError(f"not a condition node: {node!r}")


def evaluate(cond: Union[Condition, Node], ctx: EvaluationContext) -> bool:
    return _eval(cond.ast if isinstance(cond, Condition) else cond, ctx)


def condition_depth(node: Node) -> int:
    deepest = 0
    stack = [(node, 1)]
    while stack:
        current, depth = stack.pop()
        deepest = max(deepest, depth)
        if isinstance(current, (And, Or)):
            stack.append((current.left, depth + 1))
            stack.append((current.right, depth + 1))
        elif isinstance(current, Not):
            stack.append((current.operand, depth + 1))
    return deepest


TRUE = parse("true")


def coerce(cond: Union[str, Condition, None], depth_limit: int = DEFAULT_DEPTH_LIMIT) -> Condition:
    if cond is None:
        return TRUE
    if isinstance(cond, Condition):
        return cond
    return parse(cond, depth_limit)


def maybe_parse(source: Optional[str]) -> Optional[Condition]:
    return None if source is None else parse(source)
