"""Vocabulary, configuration and shared numeric conventions.

All scores are natural-log values. The only non-finite value that ever
appears in a score matrix is ``NEG_INF``, used to mask out candidates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

START_ID = 0
EOS_ID = 1
START = "<s>"
EOS = "</s>"
NEG_INF = -math.inf


class LmbrBeamError(Exception):
    """Base class for errors raised by this package."""


class FormatError(LmbrBeamError, ValueError):
    """An input file or stream is malformed."""


class OutOfVocabularyError(LmbrBeamError, KeyError):
    def __init__(self, word: str):
        super().__init__(word)
        self.word = word

    def __str__(self) -> str:
        return f"out-of-vocabulary token: {self.word!r}"


class ContractError(LmbrBeamError, ValueError):
    """Arguments violate a dimension or range contract."""


class TokenRangeError(ContractError):
    pass


class DecodeError(LmbrBeamError, RuntimeError):
    """Decoding could not produce any EOS-terminated hypothesis."""


class ConfigError(LmbrBeamError, ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token list; the line number in the vocabulary file is the id."""

    tokens: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.tokens) < 2 or self.tokens[0] != START or self.tokens[1] != EOS:
            raise FormatError(f"vocabulary must start with {START!r} and {EOS!r}")
        index = {}
        for i, tok in enumerate(self.tokens):
            if not tok or any(c.isspace() for c in tok):
                raise FormatError(f"invalid token at line {i + 1}: {tok!r}")
            if tok in index:
                raise FormatError(f"duplicate token {tok!r} at line {i + 1}")
            index[tok] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def id(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise OutOfVocabularyError(word) from None

    def encode(self, words: Iterable[str]) -> List[int]:
        return [self.id(w) for w in words]

    def decode(self, ids: Iterable[int]) -> List[str]:
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.tokens):
                raise TokenRangeError(f"token id {i} outside vocabulary of size {len(self.tokens)}")
            out.append(self.tokens[i])
        return out


def load_vocabulary(text: str) -> Vocabulary:
    """Parse a newline-separated token list.

    A single trailing newline is tolerated; any other empty line is an error.
    """
    if not text:
        raise FormatError("empty vocabulary")
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    lines = [ln.rstrip("\r") for ln in lines]
    return Vocabulary(tuple(lines))


def read_vocabulary(path: Union[str, Path]) -> Vocabulary:
    return load_vocabulary(Path(path).read_text(encoding="utf-8"))


def encode_tokens(v: Vocabulary, words: Sequence[str]) -> List[int]:
    return v.encode(words)


def decode_tokens(v: Vocabulary, ids: Sequence[int]) -> List[str]:
    return v.decode(ids)


def detokenize(v: Vocabulary, ids: Sequence[int]) -> str:
    """Surface string for an output hypothesis, EOS dropped."""
    return " ".join(v.tokens[i] for i in ids if i != EOS_ID)


DEFAULT_THETA = (0.1, 0.3, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class DecoderConfig:
    beam_size: int = 12
    lam: Union[float, str] = "auto"
    theta: Tuple[float, float, float, float, float] = DEFAULT_THETA
    length_norm: bool = False
    prune_width: float = 0.0
    max_steps_slope: float = 2.0
    max_steps_offset: float = 5.0
    sentence_batch: int = 1

    def __post_init__(self):
        if int(self.beam_size) != self.beam_size or self.beam_size < 1:
            raise ConfigError(f"beam_size must be a positive integer, got {self.beam_size!r}")
        if int(self.sentence_batch) != self.sentence_batch or self.sentence_batch < 1:
            raise ConfigError(f"sentence_batch must be a positive integer, got {self.sentence_batch!r}")
        if isinstance(self.lam, str):
            if self.lam != "auto":
                raise ConfigError(f"lambda must be a positive number or 'auto', got {self.lam!r}")
        elif not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be positive, got {self.lam!r}")
        theta = tuple(float(x) for x in self.theta)
        if len(theta) != 5 or not all(math.isfinite(x) for x in theta):
            raise ConfigError("theta must hold 5 finite numbers")
        object.__setattr__(self, "theta", theta)
        if not 0.0 <= self.prune_width <= 1.0:
            raise ConfigError(f"prune_width must lie in [0, 1], got {self.prune_width!r}")
        if self.max_steps_slope <= 0 or self.max_steps_offset < 0:
            raise ConfigError("max_steps_slope must be positive and max_steps_offset non-negative")

    def resolve_lambda(self, n_members: int = 1) -> float:
        """Model weight; ``"auto"`` means 0.5 divided by the ensemble size."""
        if self.lam == "auto":
            return 0.5 / n_members
        return float(self.lam)

    def with_(self, **changes) -> "DecoderConfig":
        return replace(self, **changes)


_CONFIG_KEYS = {
    "beam_size": "beam_size",
    "lambda": "lam",
    "theta": "theta",
    "length_norm": "length_norm",
    "prune_width": "prune_width",
    "max_steps_slope": "max_steps_slope",
    "max_steps_offset": "max_steps_offset",
    "sentence_batch": "sentence_batch",
}


def config_from_dict(obj: dict) -> DecoderConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(obj) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {_CONFIG_KEYS[k]: v for k, v in obj.items()}
    if "theta" in kwargs:
        kwargs["theta"] = tuple(kwargs["theta"])
    try:
        return DecoderConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_to_dict(cfg: DecoderConfig) -> dict:
    return {k: (list(getattr(cfg, a)) if k == "theta" else getattr(cfg, a)) for k, a in _CONFIG_KEYS.items()}


def load_config(path: Union[str, Path]) -> DecoderConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(obj)
