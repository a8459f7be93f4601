"""Rank and unrank the words of a regular language.

A pattern plus a fixed length defines a finite, ordered set of words.
rank() maps a word to its index, unrank() maps the index back, and the
word count fixes how many payload bits one word can carry.
"""

from pmucloak.ranking import NotInLanguage, compile_pattern


def main() -> None:
    lang = compile_pattern("^(x|yz)+$", 6)
    print(f"pattern ^(x|yz)+$ at length 6: {lang.word_count} words, "
          f"{lang.capacity_bits} usable bits")
    print()
    print("the full enumeration, in rank order:")
    for i in range(lang.word_count):
        word = lang.unrank(i)
        assert lang.rank(word) == i
        print(f"  {i:3d}  {word}")
    print()

    hexlang = compile_pattern("^[0-9a-f]+$", 512)
    print(f"pattern ^[0-9a-f]+$ at length 512: 16^512 words "
          f"({hexlang.capacity_bits} usable bits, {hexlang.capacity_bits // 8} bytes)")
    idx = 2**2047 + 12345
    word = hexlang.unrank(idx)
    print(f"unrank(2^2047 + 12345) starts with {word[:48]}...")
    print(f"rank() of that word returns the same index: {hexlang.rank(word) == idx}")
    print()

    try:
        lang.rank("xxxxxy")
    except NotInLanguage as exc:
        print(f"rank of a non-member -> {type(exc).__name__}: {exc}")


if __name__ == "__main__":
    main()
