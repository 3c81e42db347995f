"""Recursive-descent parser for the LaTeX subset used by candidate equations.

Supported: ``=``, ``+ - * /``, implicit multiplication, ``\\frac``, ``^``,
``\\ln``, ``\\log`` (read as natural log), ``\\exp``, ``e^{...}``, ``\\sqrt``,
``\\left``/``\\right``, parentheses/braces/brackets, ``\\cdot``/``\\times``,
subscripted identifiers (``E_c`` is one symbol) and Greek-letter commands.
Parameters follow the ``k_<n>`` convention, case-folded (``K_1`` -> ``k_1``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ParseError, UnsupportedError

GREEK = (
    "alpha beta gamma delta epsilon varepsilon zeta eta theta vartheta iota kappa "
    "lambda mu nu xi pi rho sigma tau upsilon phi varphi chi psi omega "
    "Gamma Delta Theta Lambda Xi Pi Sigma Upsilon Phi Psi Omega"
).split()

FUNCTIONS = {"ln": "ln", "log": "ln", "exp": "exp"}
FRACS = ("frac", "dfrac", "tfrac")
MUL_CMDS = ("cdot", "times", "ast")
SKIP_CMDS = ("left", "right", "big", "Big", "bigg", "Bigg", "bigl", "bigr", "Bigl", "Bigr",
             "displaystyle", "textstyle", "quad", "qquad")
TEXT_CMDS = ("mathrm", "text", "mathit", "operatorname", "textrm", "mathbf")

PARAM_RE = re.compile(r"^[kK]_\{?(\d+)\}?$")


@dataclass(frozen=True)
class Node:
    """Expression tree node.

    ``op`` is one of var, param, const, add, sub, mul, div, pow, neg, ln, exp.
    Leaves keep their payload in ``value`` (symbol name or float).
    """

    op: str
    args: tuple = ()
    value: object = None

    # convenience constructors
    @staticmethod
    def var(name):
        return Node("var", value=name)

    @staticmethod
    def param(name):
        return Node("param", value=name)

    @staticmethod
    def const(v):
        return Node("const", value=float(v))

    def __repr__(self):
        if self.op in ("var", "param"):
            return f"{self.op}({self.value})"
        if self.op == "const":
            return f"const({self.value:g})"
        return f"{self.op}({', '.join(map(repr, self.args))})"


@dataclass(frozen=True)
class ParsedEquation:
    target: Optional[str]
    rhs: Node
    lhs: Optional[Node] = None


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, cmd, op
    text: str
    pos: int


def canonical_symbol(base: str, sub: Optional[str]) -> str:
    name = base if sub is None else f"{base}_{sub}"
    m = PARAM_RE.match(name)
    if m:
        return f"k_{int(m.group(1))}"
    return name


def is_parameter(symbol: str) -> bool:
    return bool(PARAM_RE.match(symbol))


def _read_group(src, i):
    """Return (content, end) for a ``{...}`` group starting at ``src[i] == '{'``."""
    depth = 0
    for j in range(i, len(src)):
        if src[j] == "{":
            depth += 1
        elif src[j] == "}":
            depth -= 1
            if depth == 0:
                return src[i + 1:j], j + 1
    raise ParseError("unbalanced brace", _byte_offset(src, i))


def _byte_offset(src, i):
    return len(src[:i].encode("utf-8"))


def _read_subscript(src, i):
    """Parse ``_x`` / ``_{xy}`` at ``src[i] == '_'``; return (text, end)."""
    j = i + 1
    while j < len(src) and src[j] == " ":
        j += 1
    if j >= len(src):
        raise ParseError("dangling subscript", _byte_offset(src, i))
    if src[j] == "{":
        content, end = _read_group(src, j)
        content = re.sub(r"\\(?:mathrm|text|mathit|rm)\s*", "", content)
        content = re.sub(r"[{}\\\s,]", "", content)
        if not content:
            raise ParseError("empty subscript", _byte_offset(src, i))
        return content, end
    if src[j] == "\\":
        m = re.match(r"\\([A-Za-z]+)", src[j:])
        if m:
            return m.group(1), j + m.end()
    if src[j].isalnum():
        return src[j], j + 1
    raise ParseError("bad subscript", _byte_offset(src, i))


def tokenize(src: str):
    tokens = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace() or c in "$&":
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            m = re.match(r"\d*\.?\d+|\d+\.", src[i:])
            tokens.append(Token("num", m.group(0), i))
            i += m.end()
            continue
        if c.isalpha():
            # single letter identifiers; juxtaposed letters are products
            j = i + 1
            sub = None
            if j < n and src[j] == "_":
                sub, j = _read_subscript(src, j)
            tokens.append(Token("ident", canonical_symbol(c, sub), i))
            i = j
            continue
        if c == "\\":
            m = re.match(r"\\([A-Za-z]+)", src[i:])
            if not m:
                # spacing commands \, \; \! \  and escaped braces
                nxt = src[i + 1:i + 2]
                if nxt in (",", ";", "!", " ", ":"):
                    i += 2
                    continue
                if nxt in ("{", "}"):
                    tokens.append(Token("op", "(" if nxt == "{" else ")", i))
                    i += 2
                    continue
                raise ParseError(f"stray backslash", _byte_offset(src, i))
            name = m.group(1)
            j = i + m.end()
            if name in SKIP_CMDS:
                # \left. / \right. produce no delimiter
                if name in ("left", "right") and j < n and src[j] == ".":
                    j += 1
                i = j
                continue
            if name in TEXT_CMDS:
                while j < n and src[j] == " ":
                    j += 1
                if j >= n or src[j] != "{":
                    raise ParseError(f"\\{name} needs a group", _byte_offset(src, i))
                content, j = _read_group(src, j)
                content = content.strip()
                if content in FUNCTIONS:
                    tokens.append(Token("cmd", content, i))
                elif re.fullmatch(r"[A-Za-z][A-Za-z0-9]*", content):
                    sub = None
                    if j < n and src[j] == "_":
                        sub, j = _read_subscript(src, j)
                    tokens.append(Token("ident", canonical_symbol(content, sub), i))
                else:
                    raise ParseError(f"unsupported \\{name} content {content!r}", _byte_offset(src, i))
                i = j
                continue
            if name in GREEK:
                sub = None
                if j < n and src[j] == "_":
                    sub, j = _read_subscript(src, j)
                tokens.append(Token("ident", canonical_symbol(name, sub), i))
                i = j
                continue
            if name in MUL_CMDS:
                tokens.append(Token("op", "*", i))
            elif name == "div":
                tokens.append(Token("op", "/", i))
            elif name in FUNCTIONS or name in FRACS or name == "sqrt":
                tokens.append(Token("cmd", name, i))
            else:
                raise UnsupportedError("\\" + name, _byte_offset(src, i))
            i = j
            continue
        if c in "+-*/^=()[]{},":
            tokens.append(Token("op", c, i))
            i += 1
            continue
        if c in "−–":
            tokens.append(Token("op", "-", i))
            i += 1
            continue
        if c in "·×":
            tokens.append(Token("op", "*", i))
            i += 1
            continue
        raise ParseError(f"unexpected character {c!r}", _byte_offset(src, i))
    return tokens


_CLOSER = {"(": ")", "[": "]", "{": "}"}


class _Parser:
    def __init__(self, src):
        self.src = src
        self.tokens = tokenize(src)
        self.i = 0

    # -- helpers
    def peek(self, offset=0):
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", _byte_offset(self.src, len(self.src)))
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        pos = len(self.src) if tok is None else tok.pos
        return ParseError(msg, _byte_offset(self.src, pos))

    def accept(self, kind, text=None):
        tok = self.peek()
        if tok and tok.kind == kind and (text is None or tok.text == text):
            self.i += 1
            return tok
        return None

    def expect(self, kind, text):
        tok = self.peek()
        if not tok or tok.kind != kind or tok.text != text:
            raise self.error(f"expected {text!r}")
        self.i += 1
        return tok

    # -- grammar
    def equation(self):
        left = self.expr()
        if self.accept("op", "="):
            right = self.expr()
            if self.peek() is not None:
                if self.peek().text == "=":
                    raise self.error("chained equality not supported")
                raise self.error(f"unexpected token {self.peek().text!r}")
            target = left.value if left.op == "var" else None
            return ParsedEquation(target=target, rhs=right, lhs=left)
        if self.peek() is not None:
            raise self.error(f"unexpected token {self.peek().text!r}")
        return ParsedEquation(target=None, rhs=left, lhs=None)

    def expr(self):
        node = self.term()
        while True:
            if self.accept("op", "+"):
                node = Node("add", (node, self.term()))
            elif self.accept("op", "-"):
                node = Node("sub", (node, self.term()))
            else:
                return node

    def _starts_factor(self, tok):
        if tok is None:
            return False
        if tok.kind in ("num", "ident", "cmd"):
            return True
        return tok.kind == "op" and tok.text in ("(", "[", "{")

    def term(self):
        node = self.unary()
        while True:
            tok = self.peek()
            if self.accept("op", "*"):
                node = Node("mul", (node, self.unary()))
            elif self.accept("op", "/"):
                node = Node("div", (node, self.unary()))
            elif self._starts_factor(tok):
                node = Node("mul", (node, self.power()))
            else:
                return node

    def unary(self):
        if self.accept("op", "-"):
            return Node("neg", (self.unary(),))
        if self.accept("op", "+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.accept("op", "^"):
            exponent = self.exponent()
            if base.op == "var" and base.value == "e":
                return Node("exp", (exponent,))
            return Node("pow", (base, exponent))
        return base

    def exponent(self):
        tok = self.peek()
        if tok is None:
            raise self.error("missing exponent")
        if tok.kind == "op" and tok.text == "{":
            return self.group()
        if tok.kind == "num":
            self.i += 1
            # x^23 means x^2 * 3 in LaTeX; keep only the first digit
            if len(tok.text) > 1 and "." not in tok.text[:2]:
                rest = Token("num", tok.text[1:], tok.pos + 1)
                self.tokens.insert(self.i, rest)
                return Node.const(tok.text[0])
            return Node.const(tok.text)
        if tok.kind == "op" and tok.text == "-":
            self.i += 1
            return Node("neg", (self.exponent(),))
        return self.primary()

    def group(self):
        open_tok = self.next()
        closer = _CLOSER[open_tok.text]
        if self.peek() is not None and self.peek().text == closer:
            raise self.error("empty group")
        node = self.expr()
        tok = self.peek()
        if tok is None or tok.text != closer:
            raise self.error(f"expected {closer!r}")
        self.i += 1
        return node

    def func_arg(self):
        tok = self.peek()
        if tok is None:
            raise self.error("missing function argument")
        if tok.kind == "op" and tok.text in _CLOSER:
            return self.group()
        return self.power()

    def primary(self):
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of input")
        if tok.kind == "num":
            self.i += 1
            return Node.const(tok.text)
        if tok.kind == "ident":
            self.i += 1
            if is_parameter(tok.text):
                return Node.param(tok.text)
            return Node.var(tok.text)
        if tok.kind == "op" and tok.text in _CLOSER:
            return self.group()
        if tok.kind == "cmd":
            self.i += 1
            if tok.text in FRACS:
                num = self._braced()
                den = self._braced()
                return Node("div", (num, den))
            if tok.text == "sqrt":
                return Node("pow", (self._braced(), Node.const(0.5)))
            fn = FUNCTIONS[tok.text]
            if tok.text == "log" and self.peek() is not None and self.peek().text == "_":
                raise self.error("log base")
            return Node(fn, (self.func_arg(),))
        raise self.error(f"unexpected token {tok.text!r}", tok)

    def _braced(self):
        tok = self.peek()
        if tok is None:
            raise self.error("missing argument")
        if tok.kind == "op" and tok.text == "{":
            return self.group()
        # \frac12 style single-token arguments
        if tok.kind == "num" and len(tok.text) > 1:
            self.i += 1
            self.tokens.insert(self.i, Token("num", tok.text[1:], tok.pos + 1))
            return Node.const(tok.text[0])
        return self.primary()


def _strip_log_base(src):
    # \log_{10} and \log_2: the base is dropped, every log is natural
    return re.sub(r"\\log\s*_\s*(\{[^}]*\}|\w)", r"\\log", src)


def parse_latex(latex: str) -> ParsedEquation:
    """Parse an equation (or bare expression) into a tree.

    >>> parse_latex(r"C_d = K_1 \\ln(E/K_2)").rhs
    mul(param(k_1), ln(div(var(E), param(k_2))))
    """
    if not isinstance(latex, str):
        raise ParseError("latex must be a string", 0)
    src = latex.strip().strip("$").strip()
    if src.startswith("\\[") and src.endswith("\\]"):
        src = src[2:-2]
    src = _strip_log_base(src)
    if not src:
        raise ParseError("empty expression", 0)
    return _Parser(src).equation()


def free_symbols(node: Node):
    """Return (variables, parameters) as sorted lists."""
    vars_, params = set(), set()

    def walk(n):
        if n.op == "var":
            vars_.add(n.value)
        elif n.op == "param":
            params.add(n.value)
        for a in n.args:
            walk(a)

    walk(node)
    return sorted(vars_), sorted(params, key=_param_order)


def _param_order(name):
    m = PARAM_RE.match(name)
    return (0, int(m.group(1)), "") if m else (1, 0, name)


def substitute(node: Node, mapping) -> Node:
    """Replace ``var`` leaves whose name is in ``mapping`` with the mapped node."""
    if node.op == "var" and node.value in mapping:
        return mapping[node.value]
    if not node.args:
        return node
    return Node(node.op, tuple(substitute(a, mapping) for a in node.args), node.value)


def extract_symbols(latex: str):
    """Best-effort identifier list for arbitrary LaTeX (never raises).

    Used for hints and symbol bookkeeping where the text may fall outside
    the parser's subset.
    """
    try:
        toks = tokenize(_strip_log_base(latex.strip().strip("$")))
        out = []
        for t in toks:
            if t.kind == "ident" and t.text not in out and not (t.text == "e"):
                out.append(t.text)
        return out
    except ParseError:
        pass
    body = re.sub(r"\\(?:left|right|frac|d?frac|ln|log|exp|cdot|times|sqrt|mathrm|text)\b", " ", latex)
    found = []
    for m in re.finditer(r"\\?[A-Za-z]+(?:_\{[^}]*\}|_[A-Za-z0-9])?", body):
        tok = m.group(0).lstrip("\\").replace("{", "").replace("}", "")
        if tok not in found:
            found.append(tok)
    return found


# -- rendering ---------------------------------------------------------------

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 3}


def _fmt_const(v):
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return np.format_float_positional(float(v), trim="-")


def _paren(s):
    return f"\\left({s}\\right)"


def render_symbol(name: str) -> str:
    base, _, sub = name.partition("_")
    if base in GREEK:
        base = "\\" + base
    elif len(base) > 1:
        base = f"\\mathrm{{{base}}}"
    return base + (f"_{{{sub}}}" if sub else "")


def render(node: Node) -> str:
    """Render a tree back to the parser's LaTeX normal form.

    ``parse_latex(render(t)).rhs == t`` for every tree the parser produces.
    """
    op = node.op
    if op == "param":
        return str(node.value)
    if op == "var":
        return render_symbol(node.value)
    if op == "const":
        return _fmt_const(node.value)
    if op in ("ln", "exp"):
        return f"\\{op}{_paren(render(node.args[0]))}"
    if op == "div":
        return f"\\frac{{{render(node.args[0])}}}{{{render(node.args[1])}}}"
    if op == "pow":
        return f"{{{render(node.args[0])}}}^{{{render(node.args[1])}}}"
    if op == "neg":
        child = node.args[0]
        inner = render(child)
        return "-" + (_paren(inner) if child.op in ("add", "sub", "mul") else inner)
    prec = _PREC[op]
    left, right = node.args
    a, b = render(left), render(right)
    if _PREC.get(left.op, 9) < prec:
        a = _paren(a)
    if _PREC.get(right.op, 9) <= prec:
        b = _paren(b)
    sym = {"add": " + ", "sub": " - ", "mul": " \\cdot "}[op]
    return f"{a}{sym}{b}"


def render_equation(eq: ParsedEquation) -> str:
    rhs = render(eq.rhs)
    if eq.lhs is None:
        return rhs
    return f"{render(eq.lhs)} = {rhs}"
