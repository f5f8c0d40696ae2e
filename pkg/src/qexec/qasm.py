"""OpenQASM 2.0 subset parser.

Accepted statements: the ``OPENQASM 2.0`` header, ``include``, ``qreg``,
``creg``, registry gates, ``measure`` and ``barrier`` (dropped). Registers are
flattened to global qubit/clbit indices in declaration order. Anything else
(``gate`` definitions, ``if``, ``reset``, ``opaque``) is rejected.
"""
from __future__ import annotations

import math
import re
from pathlib import Path
from typing import NamedTuple

from .circuit import MEASURE, Circuit, GateOp, GateRegistry, default_node_registry


class QasmError(ValueError):
    pass


class QasmSyntaxError(QasmError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


class UnknownGateError(QasmError):
    pass


class QubitIndexError(QasmError):
    pass


class _Tok(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<real>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>"[^"\n]*")
  | (?P<arrow>->)
  | (?P<sym>[;,\[\](){}+\-*/^])
    """,
    re.VERBOSE,
)

_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
}
_UNSUPPORTED = {"gate", "opaque", "if", "reset"}


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QasmSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, registry: GateRegistry):
        self.toks = _tokenize(text)
        self.i = 0
        self.registry = registry
        self.qregs: dict[str, tuple[int, int]] = {}  # name -> (offset, size)
        self.cregs: dict[str, tuple[int, int]] = {}
        self.nq = 0
        self.nc = 0
        self.ops: list[GateOp] = []

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise QasmSyntaxError(msg, tok.line, tok.col)

    def next(self) -> _Tok:
        tok = self.tok
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "str":
            self.fail(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.next()

    def expect_kind(self, kind: str, what: str) -> _Tok:
        if self.tok.kind != kind:
            self.fail(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        return self.next()

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind != "str":
            self.i += 1
            return True
        return False

    def parse(self) -> None:
        if self.tok.text == "OPENQASM":
            self.next()
            version = self.expect_kind("real", "version number")
            if version.text not in ("2", "2.0"):
                self.fail(f"unsupported OpenQASM version {version.text}", version)
            self.expect(";")
        while self.tok.kind != "eof":
            self.statement()

    def statement(self) -> None:
        tok = self.tok
        if tok.kind != "id":
            self.fail(f"expected a statement, found {tok.text!r}")
        word = tok.text
        if word == "include":
            self.next()
            self.expect_kind("str", "file name string")
            self.expect(";")
        elif word in ("qreg", "creg"):
            self.register(word)
        elif word == "barrier":
            self.next()
            self.arglist(self.qregs, "qubit")
            self.expect(";")
        elif word == MEASURE:
            self.measure()
        elif word in _UNSUPPORTED or word == "OPENQASM":
            self.fail(f"'{word}' is not supported")
        else:
            self.gate()

    def register(self, word: str) -> None:
        self.next()
        name = self.expect_kind("id", "register name")
        self.expect("[")
        size_tok = self.expect_kind("real", "register size")
        if not size_tok.text.isdigit():
            self.fail("register size must be an integer", size_tok)
        self.expect("]")
        self.expect(";")
        size = int(size_tok.text)
        if name.text in self.qregs or name.text in self.cregs:
            self.fail(f"register {name.text!r} redeclared", name)
        if word == "qreg":
            self.qregs[name.text] = (self.nq, size)
            self.nq += size
        else:
            self.cregs[name.text] = (self.nc, size)
            self.nc += size

    def arg(self, regs: dict[str, tuple[int, int]], what: str) -> list[int]:
        name = self.expect_kind("id", f"{what} argument")
        if name.text not in regs:
            self.fail(f"undeclared {what} register {name.text!r}", name)
        offset, size = regs[name.text]
        if self.accept("["):
            idx_tok = self.expect_kind("real", "index")
            if not idx_tok.text.isdigit():
                self.fail("index must be an integer", idx_tok)
            self.expect("]")
            idx = int(idx_tok.text)
            if idx >= size:
                raise QubitIndexError(
                    f"line {idx_tok.line}, col {idx_tok.col}: index {idx} out of range for "
                    f"{name.text}[{size}]"
                )
            return [offset + idx]
        return list(range(offset, offset + size))

    def arglist(self, regs, what) -> list[list[int]]:
        args = [self.arg(regs, what)]
        while self.accept(","):
            args.append(self.arg(regs, what))
        return args

    def measure(self) -> None:
        self.next()
        start = self.tok
        q = self.arg(self.qregs, "qubit")
        self.expect("->")
        c = self.arg(self.cregs, "classical")
        self.expect(";")
        if len(q) != len(c):
            self.fail("measure register sizes differ", start)
        for qi, ci in zip(q, c):
            self.ops.append(GateOp(MEASURE, (qi,), (), ci))

    def gate(self) -> None:
        name_tok = self.next()
        name = name_tok.text
        if name not in self.registry:
            raise UnknownGateError(f"line {name_tok.line}, col {name_tok.col}: unknown gate {name!r}")
        spec = self.registry[name]
        params: list[float] = []
        if self.accept("("):
            if not self.accept(")"):
                params.append(self.expr())
                while self.accept(","):
                    params.append(self.expr())
                self.expect(")")
        if len(params) != spec.param_count:
            self.fail(f"gate {name!r} takes {spec.param_count} parameter(s), got {len(params)}", name_tok)
        args = self.arglist(self.qregs, "qubit")
        self.expect(";")
        if len(args) != spec.arity:
            self.fail(f"gate {name!r} acts on {spec.arity} qubit(s), got {len(args)}", name_tok)
        sizes = {len(a) for a in args if len(a) != 1}
        if len(sizes) > 1:
            self.fail(f"gate {name!r}: register arguments differ in size", name_tok)
        width = sizes.pop() if sizes else 1
        for k in range(width):
            qubits = tuple(a[0] if len(a) == 1 else a[k] for a in args)
            if len(set(qubits)) != len(qubits):
                self.fail(f"gate {name!r}: repeated qubit operand", name_tok)
            self.ops.append(GateOp(name, qubits, tuple(params)))

    # expressions: standard precedence, ^ right-associative
    def expr(self) -> float:
        value = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "sym":
            op = self.next().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> float:
        value = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "sym":
            op_tok = self.next()
            rhs = self.unary()
            if op_tok.text == "*":
                value *= rhs
            else:
                if rhs == 0:
                    self.fail("division by zero", op_tok)
                value /= rhs
        return value

    def unary(self) -> float:
        if self.tok.kind == "sym" and self.tok.text in ("-", "+"):
            sign = -1.0 if self.next().text == "-" else 1.0
            return sign * self.unary()
        return self.power()

    def power(self) -> float:
        base = self.primary()
        if self.tok.kind == "sym" and self.tok.text == "^":
            self.next()
            return base ** self.unary()
        return base

    def primary(self) -> float:
        tok = self.tok
        if tok.kind == "real":
            self.next()
            return float(tok.text)
        if tok.kind == "id":
            self.next()
            if tok.text == "pi":
                return math.pi
            if tok.text in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                try:
                    return _FUNCS[tok.text](arg)
                except ValueError:
                    self.fail(f"{tok.text}({arg}) is undefined", tok)
            self.fail(f"unknown identifier {tok.text!r} in expression", tok)
        if self.accept("("):
            value = self.expr()
            self.expect(")")
            return value
        self.fail(f"expected an expression, found {tok.text or 'end of input'!r}")


def parse_qasm(text: str, registry: GateRegistry | None = None, name: str = "") -> Circuit:
    """Parse OpenQASM 2.0 text into a :class:`Circuit`.

    Raises :class:`QasmSyntaxError` (with line/column), :class:`UnknownGateError`
    or :class:`QubitIndexError`.
    """
    parser = _Parser(text, registry if registry is not None else default_node_registry())
    parser.parse()
    return Circuit(parser.nq, parser.nc, tuple(parser.ops), name)


def load_qasm(path: str | Path, registry: GateRegistry | None = None) -> Circuit:
    path = Path(path)
    return parse_qasm(path.read_text(encoding="utf-8"), registry, name=path.stem)
