from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType

from app.errors import ConfigError, UnknownWordError

PAD, BOS, EOS = 0, 1, 2
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>")


@dataclass(frozen=True)
class Vocab:
    """Closed caption vocabulary; ids are dense and specials come first."""

    words: tuple[str, ...]
    word_to_id: MappingProxyType = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "word_to_id", MappingProxyType({w: i for i, w in enumerate(self.words)}))

    @property
    def size(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def payload_words(self) -> tuple[str, ...]:
        return self.words[len(SPECIAL_TOKENS):]


def build_vocab(words: Iterable[str]) -> Vocab:
    unique = set(words)
    if not unique:
        raise ConfigError("cannot build a vocabulary from an empty word set")
    clash = unique & set(SPECIAL_TOKENS)
    if clash:
        raise ConfigError(f"caption words collide with special tokens: {sorted(clash)}")
    return Vocab(words=SPECIAL_TOKENS + tuple(sorted(unique)))


def encode_text(words: Sequence[str], vocab: Vocab) -> list[int]:
    ids = [BOS]
    for word in words:
        try:
            ids.append(vocab.word_to_id[word])
        except KeyError:
            raise UnknownWordError(word) from None
    ids.append(EOS)
    return ids


def decode_text(ids: Iterable[int], vocab: Vocab) -> list[str]:
    """Inverse of encode_text: drops a leading BOS, stops at EOS, skips PAD."""
    words = []
    for i, token in enumerate(int(t) for t in ids):
        if token == EOS:
            break
        if token == PAD or (token == BOS and i == 0):
            continue
        words.append(vocab.words[token])
    return words
