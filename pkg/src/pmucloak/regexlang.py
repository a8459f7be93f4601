"""Anchored regex dialect compiled to a DFA.

Supported syntax: literals, escapes (punctuation, \\n \\r \\t \\f \\v, \\xHH,
\\d \\w \\s and their negations), character classes with ranges and negation,
'.', grouping, alternation, and the repeats '*', '+', '?'. Matching is
whole-string: a leading '^' and trailing '$' are accepted and ignored;
anchors anywhere else are rejected. No backreferences, no counted repeats.

The DFA exists to be counted and ranked (see ``ranking``), so it exposes its
transition table directly instead of a match API.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidPattern

_ALL_CHARS = frozenset(chr(i) for i in range(256))
_DOT = _ALL_CHARS - {"\n"}  # '.' follows the usual default: no newline
_DIGITS = frozenset("0123456789")
_WORD = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")
_SPACE = frozenset(" \t\n\r\f\v")
_PUNCT_ESCAPES = set("\\.*+?()[]|^$-{}/")
_CTRL_ESCAPES = {"n": "\n", "r": "\r", "t": "\t", "f": "\f", "v": "\v", "0": "\0"}


# -- AST -----------------------------------------------------------------------

@dataclass(frozen=True)
class _Lit:
    chars: frozenset[str]


@dataclass(frozen=True)
class _Concat:
    parts: tuple


@dataclass(frozen=True)
class _Alt:
    options: tuple


@dataclass(frozen=True)
class _Repeat:
    child: object
    at_least_one: bool
    unbounded: bool


# -- Parser ---------------------------------------------------------------------

def _strip_anchors(pattern: str) -> str:
    if pattern.startswith("^"):
        pattern = pattern[1:]
    if pattern.endswith("$"):
        backslashes = 0
        i = len(pattern) - 2
        while i >= 0 and pattern[i] == "\\":
            backslashes += 1
            i -= 1
        if backslashes % 2 == 0:
            pattern = pattern[:-1]
    return pattern


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> InvalidPattern:
        return InvalidPattern(f"{msg} at position {self.pos} in pattern {self.text!r}")

    def peek(self) -> str | None:
        return self.text[self.pos] if self.pos < len(self.text) else None

    def take(self) -> str:
        ch = self.text[self.pos]
        self.pos += 1
        return ch

    def parse(self):
        node = self.alternation()
        if self.pos != len(self.text):
            raise self.error(f"unexpected {self.text[self.pos]!r}")
        return node

    def alternation(self):
        options = [self.concatenation()]
        while self.peek() == "|":
            self.take()
            options.append(self.concatenation())
        return options[0] if len(options) == 1 else _Alt(tuple(options))

    def concatenation(self):
        parts = []
        while self.peek() not in (None, "|", ")"):
            parts.append(self.repeatable())
        if len(parts) == 1:
            return parts[0]
        return _Concat(tuple(parts))

    def repeatable(self):
        node = self.atom()
        while self.peek() in ("*", "+", "?"):
            op = self.take()
            if op == "*":
                node = _Repeat(node, at_least_one=False, unbounded=True)
            elif op == "+":
                node = _Repeat(node, at_least_one=True, unbounded=True)
            else:
                node = _Repeat(node, at_least_one=False, unbounded=False)
        return node

    def atom(self):
        ch = self.peek()
        if ch is None:
            raise self.error("pattern ended where an atom was expected")
        if ch == "(":
            self.take()
            node = self.alternation()
            if self.peek() != ")":
                raise self.error("unclosed group")
            self.take()
            return node
        if ch == "[":
            return _Lit(self.char_class())
        if ch == ".":
            self.take()
            return _Lit(_DOT)
        if ch == "\\":
            return _Lit(self.escape(in_class=False))
        if ch in "*+?":
            raise self.error(f"dangling repeat {ch!r}")
        if ch in ")]":
            raise self.error(f"unmatched {ch!r}")
        if ch in "^$":
            raise self.error("anchors are only allowed at the pattern edges")
        if ch in "{}":
            raise self.error("counted repeats are not supported")
        self.take()
        return _Lit(frozenset(ch))

    def escape(self, in_class: bool) -> frozenset[str]:
        self.take()  # backslash
        ch = self.peek()
        if ch is None:
            raise self.error("dangling backslash")
        self.take()
        if ch == "d":
            return _DIGITS
        if ch == "D":
            return _ALL_CHARS - _DIGITS
        if ch == "w":
            return _WORD
        if ch == "W":
            return _ALL_CHARS - _WORD
        if ch == "s":
            return _SPACE
        if ch == "S":
            return _ALL_CHARS - _SPACE
        if ch == "x":
            hexdigits = self.text[self.pos : self.pos + 2]
            if len(hexdigits) != 2:
                raise self.error("\\x needs two hex digits")
            try:
                code = int(hexdigits, 16)
            except ValueError:
                raise self.error(f"bad \\x escape {hexdigits!r}") from None
            self.pos += 2
            return frozenset(chr(code))
        if ch in _CTRL_ESCAPES:
            return frozenset(_CTRL_ESCAPES[ch])
        if ch in _PUNCT_ESCAPES:
            return frozenset(ch)
        raise self.error(f"unsupported escape \\{ch}")

    def char_class(self) -> frozenset[str]:
        self.take()  # '['
        negate = False
        if self.peek() == "^":
            negate = True
            self.take()
        members: set[str] = set()
        saw_any = False
        while True:
            ch = self.peek()
            if ch is None:
                raise self.error("unclosed character class")
            if ch == "]":
                self.take()
                break
            if ch == "\\":
                charset = self.escape(in_class=True)
                if len(charset) == 1 and self._class_range_follows():
                    members.update(self._finish_range(next(iter(charset))))
                else:
                    members.update(charset)
                saw_any = True
                continue
            self.take()
            if self._class_range_follows():
                members.update(self._finish_range(ch))
            else:
                members.add(ch)
            saw_any = True
        if not saw_any:
            raise self.error("empty character class")
        return frozenset(_ALL_CHARS - members) if negate else frozenset(members)

    def _class_range_follows(self) -> bool:
        return (
            self.peek() == "-"
            and self.pos + 1 < len(self.text)
            and self.text[self.pos + 1] != "]"
        )

    def _finish_range(self, lo: str) -> set[str]:
        self.take()  # '-'
        hi_ch = self.peek()
        if hi_ch == "\\":
            charset = self.escape(in_class=True)
            if len(charset) != 1:
                raise self.error("class shorthand cannot end a range")
            hi_ch = next(iter(charset))
        else:
            self.take()
        if ord(hi_ch) < ord(lo):
            raise self.error(f"reversed range {lo}-{hi_ch}")
        return {chr(c) for c in range(ord(lo), ord(hi_ch) + 1)}


# -- Thompson NFA ------------------------------------------------------------------

class _Nfa:
    def __init__(self):
        self.eps: list[list[int]] = []
        self.edges: list[list[tuple[frozenset[str], int]]] = []

    def new_state(self) -> int:
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def add(self, node) -> tuple[int, int]:
        if isinstance(node, _Lit):
            s, e = self.new_state(), self.new_state()
            self.edges[s].append((node.chars, e))
            return s, e
        if isinstance(node, _Concat):
            if not node.parts:
                s = self.new_state()
                return s, s
            s, e = self.add(node.parts[0])
            for part in node.parts[1:]:
                s2, e2 = self.add(part)
                self.eps[e].append(s2)
                e = e2
            return s, e
        if isinstance(node, _Alt):
            s, e = self.new_state(), self.new_state()
            for opt in node.options:
                os, oe = self.add(opt)
                self.eps[s].append(os)
                self.eps[oe].append(e)
            return s, e
        if isinstance(node, _Repeat):
            cs, ce = self.add(node.child)
            s, e = self.new_state(), self.new_state()
            self.eps[s].append(cs)
            self.eps[ce].append(e)
            if node.unbounded:
                self.eps[ce].append(cs)
            if not node.at_least_one:
                self.eps[s].append(e)
            return s, e
        raise AssertionError(f"unknown AST node {node!r}")


# -- DFA -----------------------------------------------------------------------------

@dataclass
class Dfa:
    """Deterministic automaton over single characters.

    ``transitions[q]`` maps a character to the next state id; absent entries
    are rejecting. ``alphabet`` is sorted by code point, which fixes the
    lexicographic order used by ranking.
    """

    alphabet: tuple[str, ...]
    transitions: list[dict[str, int]]
    start: int
    accepting: frozenset[int]
    pattern: str = field(default="", compare=False)

    @property
    def state_count(self) -> int:
        return len(self.transitions)

    def accepts(self, s: str) -> bool:
        q = self.start
        for ch in s:
            nxt = self.transitions[q].get(ch)
            if nxt is None:
                return False
            q = nxt
        return q in self.accepting


def _closure(nfa: _Nfa, states: frozenset[int]) -> frozenset[int]:
    seen = set(states)
    stack = list(states)
    while stack:
        for t in nfa.eps[stack.pop()]:
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return frozenset(seen)


def compile_dfa(pattern: str) -> Dfa:
    """Compile an anchored pattern to a DFA.

    Raises:
        InvalidPattern: syntax error or unsupported construct.
    """
    if not isinstance(pattern, str) or pattern == "":
        raise InvalidPattern("pattern must be a non-empty string")
    ast = _Parser(_strip_anchors(pattern)).parse()
    nfa = _Nfa()
    start, end = nfa.add(ast)

    chars: set[str] = set()
    for row in nfa.edges:
        for charset, _ in row:
            chars |= charset
    alphabet = tuple(sorted(chars))
    start_set = _closure(nfa, frozenset([start]))
    ids: dict[frozenset[int], int] = {start_set: 0}
    order = [start_set]
    transitions: list[dict[str, int]] = [{}]
    i = 0
    while i < len(order):
        current = order[i]
        row = transitions[i]
        for ch in alphabet:
            targets = set()
            for n in current:
                for charset, t in nfa.edges[n]:
                    if ch in charset:
                        targets.add(t)
            if not targets:
                continue
            nxt = _closure(nfa, frozenset(targets))
            if nxt not in ids:
                ids[nxt] = len(order)
                order.append(nxt)
                transitions.append({})
            row[ch] = ids[nxt]
        i += 1

    accepting = frozenset(i for i, s in enumerate(order) if end in s)
    return Dfa(
        alphabet=alphabet,
        transitions=transitions,
        start=0,
        accepting=accepting,
        pattern=pattern,
    )
