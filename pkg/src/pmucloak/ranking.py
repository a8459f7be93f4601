"""Rank/unrank strings of a fixed length within a regular language.

``RankedLanguage`` pairs a compiled DFA with a table ``counts[i][q]`` holding
the number of accepted continuations of length ``i`` from state ``q``:

    counts[0][q] = 1 if q accepting else 0
    counts[i][q] = sum over alphabet of counts[i-1][delta(q, c)]

``rank`` maps each accepted string of the fixed length to its index in
lexicographic order (alphabet sorted by code point); ``unrank`` is the exact
inverse. Counts are arbitrary-precision, so capacities of thousands of bits
are fine.
"""
from __future__ import annotations

from bisect import bisect_right

from .errors import EmptyLanguage, IndexOutOfRange, NotInLanguage, WrongLength
from .regexlang import Dfa, compile_dfa

# Cumulative-count tables cost states * length * alphabet big integers of
# memory; above this many entries, fall back to the plain loops.
_CUM_TABLE_LIMIT = 262_144


class RankedLanguage:
    """A regular language restricted to strings of one fixed length.

    Attributes:
        pattern: the source pattern.
        length: the fixed string length (characters).
        word_count: number of accepted strings of that length.
        capacity_bits: floor(log2(word_count)); bits addressable by unrank.
    """

    def __init__(self, dfa: Dfa, length: int):
        if length < 1:
            raise ValueError(f"length must be >= 1, got {length}")
        self.dfa = dfa
        self.pattern = dfa.pattern
        self.length = length
        self.alphabet = dfa.alphabet
        self._char_index = {ch: j for j, ch in enumerate(dfa.alphabet)}
        # targets[q][j]: state reached from q on alphabet[j], or None.
        self._targets = [
            [row.get(ch) for ch in dfa.alphabet] for row in dfa.transitions
        ]
        self._counts = self._build_counts(length)
        self.word_count = self._counts[length][dfa.start]
        if self.word_count == 0:
            raise EmptyLanguage(
                f"pattern {dfa.pattern!r} accepts no string of length {length}"
            )
        # cum[rem][q][j] = number of accepted continuations of length rem+1
        # from q that start with a character strictly below alphabet[j].
        self._cum: list[list[list[int]]] | None = None
        if dfa.state_count * length * len(self.alphabet) <= _CUM_TABLE_LIMIT:
            self._cum = self._build_cum()

    @property
    def capacity_bits(self) -> int:
        return self.word_count.bit_length() - 1

    def _build_counts(self, length: int) -> list[list[int]]:
        accepting = self.dfa.accepting
        counts = [[1 if q in accepting else 0 for q in range(self.dfa.state_count)]]
        for _ in range(length):
            prev = counts[-1]
            row = []
            for targets in self._targets:
                total = 0
                for t in targets:
                    if t is not None:
                        total += prev[t]
                row.append(total)
            counts.append(row)
        return counts

    def _build_cum(self) -> list[list[list[int]]]:
        counts = self._counts
        cum = []
        for rem in range(self.length):
            prev = counts[rem]
            per_state = []
            for targets in self._targets:
                acc = 0
                pre = [0]
                for t in targets:
                    if t is not None:
                        acc += prev[t]
                    pre.append(acc)
                per_state.append(pre)
            cum.append(per_state)
        return cum

    def accepts(self, s: str) -> bool:
        return len(s) == self.length and self.dfa.accepts(s)

    def rank(self, s: str) -> int:
        """Index of ``s`` in the lexicographic enumeration of the language.

        Raises:
            WrongLength: len(s) != self.length.
            NotInLanguage: s is not accepted by the pattern.
        """
        if len(s) != self.length:
            raise WrongLength(f"need a {self.length}-character string, got {len(s)}")
        q = self.dfa.start
        r = 0
        char_index = self._char_index
        targets = self._targets
        counts = self._counts
        cum = self._cum
        for pos, ch in enumerate(s):
            j = char_index.get(ch)
            if j is None:
                raise NotInLanguage(f"character {ch!r} at {pos} is outside the alphabet")
            row = targets[q]
            if cum is not None:
                r += cum[self.length - pos - 1][q][j]
            else:
                prev = counts[self.length - pos - 1]
                for k in range(j):
                    t = row[k]
                    if t is not None:
                        r += prev[t]
            q = row[j]
            if q is None:
                raise NotInLanguage(f"no transition on {ch!r} at position {pos}")
        if q not in self.dfa.accepting:
            raise NotInLanguage(f"{s!r} ends in a non-accepting state")
        return r

    def unrank(self, index: int) -> str:
        """The index-th accepted string; exact inverse of :meth:`rank`.

        Raises:
            IndexOutOfRange: index outside [0, word_count).
        """
        if not 0 <= index < self.word_count:
            raise IndexOutOfRange(
                f"index {index} outside [0, {self.word_count})"
            )
        q = self.dfa.start
        out: list[str] = []
        targets = self._targets
        counts = self._counts
        cum = self._cum
        alphabet = self.alphabet
        for pos in range(self.length):
            row = targets[q]
            if cum is not None:
                # Largest j with cum[j] <= index picks the character interval
                # the index falls in; zero-width intervals are skipped because
                # bisect_right lands past runs of equal prefix sums.
                pre = cum[self.length - pos - 1][q]
                j = bisect_right(pre, index) - 1
                index -= pre[j]
                out.append(alphabet[j])
                q = row[j]
                continue
            prev = counts[self.length - pos - 1]
            for j, ch in enumerate(alphabet):
                t = row[j]
                if t is None:
                    continue
                c = prev[t]
                if index < c:
                    out.append(ch)
                    q = t
                    break
                index -= c
            else:  # pragma: no cover - impossible while index < word_count
                raise AssertionError("count table inconsistent")
        return "".join(out)


def compile_pattern(pattern: str, length: int) -> RankedLanguage:
    """Compile ``pattern`` and fix the output length.

    Raises:
        InvalidPattern: pattern outside the supported dialect.
        EmptyLanguage: no accepted string of the given length.
    """
    return RankedLanguage(compile_dfa(pattern), length)
