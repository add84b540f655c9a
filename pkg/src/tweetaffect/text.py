"""Tweet tokenization, vocabulary construction and index encoding."""

from __future__ import annotations

import re
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

UNK = "<unk>"
PAD = "<pad>"
URL = "<url>"
USER = "<user>"
NUMBER = "<number>"

# fixed positions: <unk>=0, <pad>=1, then the remaining specials
SPECIALS = (UNK, PAD, URL, USER, NUMBER)

WORD = "word"
HASHTAG = "hashtag-word"
SPECIAL = "special"

_PUNCT = frozenset(string.punctuation)
_URL_PREFIXES = ("http://", "https://", "www.")
_NUMERAL = re.compile(r"[+-]?\d+(?:[.,]\d+)*")
_HANDLE = re.compile(r"@\w+")
_HASHTAG = re.compile(r"#(\w+)")
# joiners and variation selectors that only modify the preceding emoji
_EMOJI_MODIFIERS = frozenset({"‍", "︎", "️"})


@dataclass(frozen=True)
class Token:
    surface: str
    kind: str = WORD

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if self.kind == SPECIAL and self.surface not in SPECIALS:
            raise ValueError(f"unknown special token {self.surface!r}")

    def __str__(self):
        return self.surface


def _is_emoji(ch: str) -> bool:
    return unicodedata.category(ch) == "So"


def _split_word(core: str) -> list[Token]:
    """Lower-case a word, splitting emoji characters off as their own tokens."""
    out: list[Token] = []
    buf: list[str] = []
    for ch in core:
        if ch in _EMOJI_MODIFIERS:
            continue
        if _is_emoji(ch):
            if buf:
                out.append(Token("".join(buf).lower()))
                buf = []
            out.append(Token(ch))
        else:
            buf.append(ch)
    if buf:
        out.append(Token("".join(buf).lower()))
    return out


def _classify_core(core: str) -> list[Token]:
    if _HANDLE.fullmatch(core):
        return [Token(USER, SPECIAL)]
    m = _HASHTAG.fullmatch(core)
    if m:
        return [Token(m.group(1).lower(), HASHTAG)]
    if _NUMERAL.fullmatch(core):
        return [Token(NUMBER, SPECIAL)]
    return _split_word(core)


def _tokenize_chunk(chunk: str) -> list[Token]:
    if chunk.lower().startswith(_URL_PREFIXES):
        return [Token(URL, SPECIAL)]

    head: list[Token] = []
    start = 0
    while start < len(chunk) and chunk[start] in _PUNCT:
        ch = chunk[start]
        # "@name" and "#tag" keep their sigil
        if ch in "@#" and start + 1 < len(chunk) and (chunk[start + 1].isalnum() or chunk[start + 1] == "_"):
            break
        head.append(Token(ch))
        start += 1

    tail: list[Token] = []
    end = len(chunk)
    while end > start and chunk[end - 1] in _PUNCT:
        tail.append(Token(chunk[end - 1]))
        end -= 1
    tail.reverse()

    core = chunk[start:end]
    if core.lower().startswith(_URL_PREFIXES):
        body = [Token(URL, SPECIAL)]
    else:
        body = _classify_core(core) if core else []
    return head + body + tail


def tokenize(text: str) -> list[Token]:
    """Split a tweet into tokens.

    URLs, user handles and standalone numerals become the special tokens
    ``<url>``, ``<user>`` and ``<number>``; hashtags lose the ``#`` and are
    tagged ``hashtag-word``. Everything else is lower-cased, split on
    whitespace, and has leading/trailing ASCII punctuation peeled off into
    single-character tokens. Emoji characters stand alone.
    """
    tokens: list[Token] = []
    for chunk in text.split():
        tokens.extend(_tokenize_chunk(chunk))
    return tokens


def _surface(tok) -> str:
    return tok.surface if isinstance(tok, Token) else str(tok)


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token/index map.

    Specials occupy indices 0..4 in the order of ``SPECIALS``; regular
    entries follow sorted by descending count, ties broken lexicographically.
    """

    entries: tuple[tuple[str, int], ...]
    min_count: int = 1
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        words = [w for w, _ in self.entries]
        if tuple(words[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        index = {w: i for i, w in enumerate(words)}
        if len(index) != len(words):
            raise ValueError("duplicate vocabulary entry")
        object.__setattr__(self, "index", index)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return _surface(word) in self.index

    def __getitem__(self, word) -> int:
        return self.index[_surface(word)]

    def get(self, word, default=None):
        return self.index.get(_surface(word), default)

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.entries]

    def count(self, word) -> int:
        return self.entries[self.index[_surface(word)]][1]

    @property
    def unk_index(self) -> int:
        return 0

    @property
    def pad_index(self) -> int:
        return 1

    def is_special(self, i: int) -> bool:
        return i < len(SPECIALS)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for word, count in self.entries:
                fh.write(f"{word}\t{count}\n")

    @classmethod
    def load(cls, path, min_count: int = 1) -> "Vocabulary":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'token<TAB>count'")
                try:
                    entries.append((parts[0], int(parts[1])))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad count {parts[1]!r}") from None
        return cls(tuple(entries), min_count)


def build_vocab(corpus: Iterable[Sequence], min_count: int = 1) -> Vocabulary:
    """Count tokens over ``corpus`` and keep those seen at least ``min_count`` times."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    for seq in corpus:
        counts.update(_surface(t) for t in seq)
    specials = [(s, counts.get(s, 0)) for s in SPECIALS]
    regular = sorted(
        ((w, c) for w, c in counts.items() if c >= min_count and w not in SPECIALS),
        key=lambda wc: (-wc[1], wc[0]),
    )
    return Vocabulary(tuple(specials + regular), min_count)


def encode(tokens: Sequence, vocab: Vocabulary) -> list[int]:
    """Map tokens to indices; unknown tokens map to ``<unk>``."""
    return [vocab.index.get(_surface(t), 0) for t in tokens]


def read_corpus(path) -> list[list[Token]]:
    """Tokenize a UTF-8 corpus file with one tweet per line."""
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ValueError(f"{path}: invalid UTF-8 at byte {exc.start}") from None
    return [tokenize(line) for line in text.splitlines()]
