"""Tweet normalization and WordPiece tokenization to fixed-length id sequences."""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)
MAX_LEN = 64
MAX_WORD_CHARS = 100

# A run of '#' not glued to a preceding word or another '#', then the body.
_HASHTAG = re.compile(r"(?<![\w#])#+(\w+)")


def _is_latin_body(body: str) -> bool:
    for ch in body:
        if ch == "_" or ("0" <= ch <= "9"):
            continue
        if not ch.isalpha() or "LATIN" not in unicodedata.name(ch, ""):
            return False
    return True


def _split_words(chunk: str) -> list:
    words = []
    start = 0
    for i in range(1, len(chunk)):
        prev, cur = chunk[i - 1], chunk[i]
        nxt = chunk[i + 1] if i + 1 < len(chunk) else ""
        boundary = (
            (prev.islower() and cur.isupper())
            or (prev.isdigit() != cur.isdigit())
            or (prev.isupper() and cur.isupper() and nxt.islower())
        )
        if boundary:
            words.append(chunk[start:i])
            start = i
    words.append(chunk[start:])
    return words


def _replace_hashtag(match: re.Match) -> str:
    body = match.group(1)
    if not any(ch.isalnum() for ch in body):
        return match.group(0)
    if not _is_latin_body(body):
        return body
    words = []
    for chunk in body.split("_"):
        if chunk:
            words.extend(_split_words(chunk))
    return " ".join(words)


def segment_hashtags(text: str) -> str:
    """Replace ``#CamelCase_tags2020`` with ``Camel Case tags 2020``.

    Latin-script hashtags are split at lower-to-upper transitions, at
    letter/digit transitions, at underscores, and before the last capital of
    an upper-case run that precedes a lower-case letter (``ABCDef`` becomes
    ``ABC Def``). Other scripts only lose the ``#``.
    """
    return _HASHTAG.sub(_replace_hashtag, text)


def _is_greek(ch: str) -> bool:
    return "GREEK" in unicodedata.name(ch, "")


def normalize_greek(text: str) -> str:
    """Lower-case and strip diacritics from Greek letters.

    Non-Greek characters are only lower-cased; Latin accents survive.
    """
    out = []
    after_greek = False
    for ch in text.lower():
        if unicodedata.combining(ch):
            if not after_greek:
                out.append(ch)
            continue
        if _is_greek(ch):
            base = "".join(c for c in unicodedata.normalize("NFD", ch) if not unicodedata.combining(c))
            out.append(base)
            after_greek = True
        else:
            out.append(ch)
            after_greek = False
    return "".join(out).lower()


def normalize(text: str, lang: str) -> str:
    """Hashtag segmentation for every language, then Greek folding for ``el``."""
    text = segment_hashtags(text)
    if lang == "el":
        text = normalize_greek(text)
    return text


class Vocabulary:
    """Token list where the line index is the token id (``vocab.txt`` layout)."""

    def __init__(self, tokens: Sequence[str], lowercase: bool = False):
        tokens = list(tokens)
        index = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise ValueError(f"duplicate vocabulary entry {tok!r} at lines {index[tok] + 1} and {i + 1}")
            index[tok] = i
        missing = [t for t in SPECIAL_TOKENS if t not in index]
        if missing:
            raise ValueError(f"vocabulary lacks special tokens: {', '.join(missing)}")
        self.tokens = tokens
        self.index = index
        self.lowercase = lowercase

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    @property
    def pad_id(self):
        return self.index[PAD]

    @property
    def unk_id(self):
        return self.index[UNK]

    @property
    def cls_id(self):
        return self.index[CLS]

    @property
    def sep_id(self):
        return self.index[SEP]

    @classmethod
    def load(cls, path, lowercase: bool = False) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls([line.rstrip("\r") for line in lines], lowercase=lowercase)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def build(cls, texts: Iterable[str], max_size: int = 30000, min_count: int = 1) -> "Vocabulary":
        """Word-level vocabulary from a corpus, backed off to single characters.

        Used when no pretrained ``vocab.txt`` is supplied (randomly initialized
        encoders and the CNN-Text / BiLSTM baselines). Every character seen
        gets both a word-initial and a ``##`` entry, so any word made of seen
        characters is fully coverable.
        """
        words = Counter()
        chars = set()
        for text in texts:
            for word in basic_tokenize(text):
                words[word] += 1
                chars.update(word)
        char_tokens = sorted(chars) + ["##" + c for c in sorted(chars)]
        budget = max(0, max_size - len(SPECIAL_TOKENS) - len(char_tokens))
        ranked = sorted((w for w, n in words.items() if n >= min_count), key=lambda w: (-words[w], w))
        tokens = list(SPECIAL_TOKENS)
        seen = set(tokens)
        for tok in ranked[:budget] + char_tokens:
            if tok not in seen:
                tokens.append(tok)
                seen.add(tok)
        return cls(tokens)


def _is_punctuation(ch: str) -> bool:
    cp = ord(ch)
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def basic_tokenize(text: str, lowercase: bool = False) -> list:
    """Whitespace split with punctuation broken out into single-character words."""
    if lowercase:
        text = text.lower()
    words = []
    for chunk in text.split():
        current = []
        for ch in chunk:
            if unicodedata.category(ch) in ("Cc", "Cf") or ch == "�":
                continue
            if _is_punctuation(ch):
                if current:
                    words.append("".join(current))
                    current = []
                words.append(ch)
            else:
                current.append(ch)
        if current:
            words.append("".join(current))
    return words


def wordpiece_word(word: str, vocab: Vocabulary) -> list:
    """Greedy longest-match-first segmentation of one word."""
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while start < end:
            candidate = word[start:end]
            if start > 0:
                candidate = "##" + candidate
            if candidate in vocab:
                piece = candidate
                break
            end -= 1
        if piece is None:
            return [UNK]
        pieces.append(piece)
        start = end
    return pieces


def wordpiece_tokenize(text: str, vocab: Vocabulary) -> list:
    tokens = []
    for word in basic_tokenize(text, lowercase=vocab.lowercase):
        tokens.extend(wordpiece_word(word, vocab))
    return tokens


def detokenize(tokens: Sequence[str]) -> str:
    out = ""
    for tok in tokens:
        if tok.startswith("##"):
            out += tok[2:]
        else:
            out += (" " if out else "") + tok
    return out


@dataclass(frozen=True)
class TokenizedExample:
    ids: tuple
    mask: tuple
    label: Optional[int] = None


def encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int = MAX_LEN, label: Optional[int] = None) -> TokenizedExample:
    """``[CLS] tokens [SEP]``, right-truncated and padded to exactly ``max_len``."""
    if max_len < 3:
        raise ValueError(f"max_len must be at least 3, got {max_len}")
    body = [vocab.id(t) for t in tokens[: max_len - 2]]
    ids = [vocab.cls_id] + body + [vocab.sep_id]
    n = len(ids)
    ids += [vocab.pad_id] * (max_len - n)
    mask = [1] * n + [0] * (max_len - n)
    return TokenizedExample(tuple(ids), tuple(mask), label)


def prepare(text: str, lang: str, vocab: Vocabulary, max_len: int = MAX_LEN, label: Optional[int] = None) -> TokenizedExample:
    """Full text-to-ids path: normalize, tokenize, encode."""
    return encode(wordpiece_tokenize(normalize(text, lang), vocab), vocab, max_len, label)
