"""Batched left-to-right model functions.

A scorer maps ``(previous batch state, previous tokens, source context)`` to a
``B x V`` block of log-probabilities plus the next batch state. Batch states
are 2-D integer/float arrays with one row per live hypothesis, so the decoder
can reorder them with a plain row gather.

Two concrete scorers ship here: an add-one smoothed n-gram language model and
a recorded scorer that replays explicit score matrices from a file.
"""

from __future__ import annotations

import abc
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import ContractError, FormatError, START_ID, TokenRangeError, Vocabulary


@dataclass(frozen=True)
class SourceContext:
    """Per-sentence data derived from the source (the annotations)."""

    tokens: Tuple[int, ...]

    @property
    def source_length(self) -> int:
        return len(self.tokens)


ContextArg = Union[SourceContext, Sequence[SourceContext]]


class Scorer(abc.ABC):
    """Interface for the batched model function."""

    #: number of ensemble members folded into this scorer
    n_members: int = 1
    #: deepest step the scorer can answer, ``None`` when unbounded
    max_depth: Optional[int] = None

    @property
    @abc.abstractmethod
    def vocab_size(self) -> int: ...

    @property
    @abc.abstractmethod
    def state_width(self) -> int: ...

    def init_source(self, source: Sequence[int]) -> Tuple[SourceContext, np.ndarray]:
        """Build the source context and the one-row initial state."""
        source = tuple(int(t) for t in source)
        if not source:
            raise ContractError("source must be non-empty")
        V = self.vocab_size
        for t in source:
            if not 0 <= t < V:
                raise TokenRangeError(f"source token {t} outside vocabulary of size {V}")
        return SourceContext(source), self._initial_state()

    @abc.abstractmethod
    def _initial_state(self) -> np.ndarray: ...

    def step(
        self, prev: np.ndarray, prev_tokens: Sequence[int], ctx: ContextArg
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Score every vocabulary entry for each of the ``B`` rows of ``prev``.

        Returns
        -------
        scores : ndarray, shape (B, V)
        next_state : ndarray, shape (B, state_width)
        """
        prev = np.asarray(prev)
        tokens = np.asarray(prev_tokens, dtype=np.int64)
        if prev.ndim != 2 or prev.shape[1] != self.state_width:
            raise ContractError(f"state must have shape (B, {self.state_width}), got {prev.shape}")
        if tokens.shape != (prev.shape[0],):
            raise ContractError(
                f"expected {prev.shape[0]} previous tokens, got shape {tokens.shape}"
            )
        if not isinstance(ctx, SourceContext) and len(ctx) != prev.shape[0]:
            raise ContractError("per-row contexts must match the batch width")
        return self._step(prev, tokens, ctx)

    @abc.abstractmethod
    def _step(self, prev: np.ndarray, tokens: np.ndarray, ctx: ContextArg): ...


def read_counts(path: Union[str, Path], v: Vocabulary) -> Dict[Tuple[int, ...], float]:
    """Read ``count<TAB>space-separated tokens`` lines into an id-keyed table."""
    counts: Dict[Tuple[int, ...], float] = defaultdict(float)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                c, words = line.split("\t")
                c = float(c)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: expected 'count<TAB>tokens'") from None
            if c < 0 or not math.isfinite(c):
                raise FormatError(f"{path}:{lineno}: count must be non-negative")
            gram = tuple(v.encode(words.split()))
            if not gram:
                raise FormatError(f"{path}:{lineno}: empty n-gram")
            counts[gram] += c
    return dict(counts)


class NgramScorer(Scorer):
    """Order-``k`` language model with add-one smoothing.

    ``P(w | h) = (c(h w) + 1) / (c(h) + V)`` with ``c(h) = sum_w c(h w)``. Only
    n-grams of exactly length ``k`` enter the estimate. The state row is the
    last ``k - 1`` token ids, initialised to start markers, so the first
    history is ``(<s>,) * (k - 1)``.
    """

    def __init__(self, counts: Mapping[Tuple[int, ...], float], order: int, vocab_size: int):
        if order < 1:
            raise ContractError("order must be >= 1")
        self.order = order
        self._V = int(vocab_size)
        if self._V ** max(order - 1, 1) >= 2**62:
            raise ContractError("vocabulary too large for the history key encoding")
        by_hist: Dict[Tuple[int, ...], Dict[int, float]] = defaultdict(dict)
        for gram, c in counts.items():
            if c < 0:
                raise ContractError(f"negative count for {gram}")
            if any(not 0 <= t < self._V for t in gram):
                raise TokenRangeError(f"n-gram {gram} outside vocabulary")
            if len(gram) == order:
                row = by_hist[gram[:-1]]
                row[gram[-1]] = row.get(gram[-1], 0.0) + c
        hists = sorted(by_hist, key=self._key)
        self._keys = np.array([self._key(h) for h in hists], dtype=np.int64)
        table = np.empty((len(hists) + 1, self._V))
        for r, h in enumerate(hists):
            num = np.ones(self._V)
            for w, c in by_hist[h].items():
                num[w] += c
            table[r] = np.log(num) - math.log(num.sum())
        table[-1] = -math.log(self._V)
        self._table = table

    def _key(self, hist: Sequence[int]) -> int:
        k = 0
        for t in hist:
            k = k * self._V + int(t)
        return k

    @property
    def vocab_size(self) -> int:
        return self._V

    @property
    def state_width(self) -> int:
        return self.order - 1

    def _initial_state(self) -> np.ndarray:
        return np.full((1, self.order - 1), START_ID, dtype=np.int64)

    def _step(self, prev, tokens, ctx):
        if self.order == 1:
            hist = prev
        else:
            hist = np.concatenate([prev[:, 1:], tokens[:, None]], axis=1)
        if len(self._keys) == 0:
            rows = np.full(len(tokens), len(self._table) - 1)
        else:
            radix = self._V ** np.arange(hist.shape[1] - 1, -1, -1, dtype=np.int64)
            key = hist @ radix
            pos = np.searchsorted(self._keys, key)
            pos_c = np.minimum(pos, len(self._keys) - 1)
            hit = self._keys[pos_c] == key
            rows = np.where(hit, pos_c, len(self._table) - 1)
        return self._table[rows], hist


def build_ngram_scorer(counts: Mapping[Tuple[int, ...], float], order: int, v: Union[Vocabulary, int]) -> NgramScorer:
    V = v.size if isinstance(v, Vocabulary) else int(v)
    return NgramScorer(counts, order, V)


class RecordedScorer(Scorer):
    """Replays explicit per-step score matrices.

    In ``"tree"`` mode (the default) ``steps[d]`` scores the token at depth
    ``d + 1`` and holds either a single row, broadcast to every prefix, or
    ``V ** d`` rows indexed by the prefix read as a base-``V`` number. This
    makes the recording a genuine prefix-conditioned model that any search
    procedure can query.

    In ``"replay"`` mode ``steps[d]`` is returned verbatim and must have as many
    rows as the batch it is asked to score.
    """

    def __init__(self, vocab_size: int, steps: Sequence, mode: str = "tree"):
        if mode not in ("tree", "replay"):
            raise FormatError(f"unknown recording mode {mode!r}")
        self._V = int(vocab_size)
        self.mode = mode
        self.steps: List[np.ndarray] = []
        for d, m in enumerate(steps):
            m = np.asarray(m, dtype=np.float64)
            if m.ndim != 2 or m.shape[1] != self._V:
                raise FormatError(f"step {d}: expected a matrix with {self._V} columns")
            if not np.all(np.isfinite(m)):
                raise FormatError(f"step {d}: scores must be finite")
            if mode == "tree" and m.shape[0] not in (1, self._V**d):
                raise FormatError(f"step {d}: tree recording needs 1 or {self._V ** d} rows")
            self.steps.append(m)
        self.max_depth = len(self.steps)

    @property
    def vocab_size(self) -> int:
        return self._V

    @property
    def state_width(self) -> int:
        # (depth, prefix index)
        return 2

    def _initial_state(self) -> np.ndarray:
        return np.zeros((1, 2), dtype=np.int64)

    def _step(self, prev, tokens, ctx):
        depth = prev[:, 0]
        if np.any(depth != depth[0]):
            raise ContractError("all rows of a recorded-scorer batch must share a depth")
        d = int(depth[0])
        if d >= len(self.steps):
            raise ContractError(f"recording has {len(self.steps)} steps, step {d + 1} requested")
        m = self.steps[d]
        if d == 0:
            index = np.zeros_like(prev[:, 1])
        else:
            index = prev[:, 1] * self._V + tokens
        if self.mode == "replay":
            if m.shape[0] != len(tokens):
                raise ContractError(f"replay step {d} has {m.shape[0]} rows, batch has {len(tokens)}")
            scores = m.copy()
        elif m.shape[0] == 1:
            scores = np.repeat(m, len(tokens), axis=0)
        else:
            scores = m[index]
        nxt = np.stack([depth + 1, index], axis=1)
        return scores, nxt

    def to_json(self) -> dict:
        obj = {"vocab_size": self._V, "steps": [m.tolist() for m in self.steps]}
        if self.mode != "tree":
            obj["mode"] = self.mode
        return obj


def load_recorded(obj_or_path) -> RecordedScorer:
    if isinstance(obj_or_path, (str, Path)):
        try:
            obj = json.loads(Path(obj_or_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{obj_or_path}: {exc}") from None
    else:
        obj = obj_or_path
    try:
        return RecordedScorer(obj["vocab_size"], obj["steps"], obj.get("mode", "tree"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"recorded scorer file needs vocab_size and steps: {exc}") from None


class EnsembleScorer(Scorer):
    """Elementwise sum of member log-probabilities.

    The combined state is the members' states laid side by side.
    """

    def __init__(self, members: Sequence[Scorer]):
        if not members:
            raise ContractError("an ensemble needs at least one member")
        V = members[0].vocab_size
        for m in members[1:]:
            if m.vocab_size != V:
                raise ContractError(f"vocabulary size mismatch: {m.vocab_size} != {V}")
        self.members = list(members)
        self.n_members = sum(m.n_members for m in members)
        depths = [m.max_depth for m in members if m.max_depth is not None]
        self.max_depth = min(depths) if depths else None
        self._splits = np.cumsum([m.state_width for m in members])[:-1]

    @property
    def vocab_size(self) -> int:
        return self.members[0].vocab_size

    @property
    def state_width(self) -> int:
        return sum(m.state_width for m in self.members)

    def _initial_state(self) -> np.ndarray:
        return np.concatenate([m._initial_state() for m in self.members], axis=1)

    def _step(self, prev, tokens, ctx):
        total = None
        states = []
        for m, part in zip(self.members, np.split(prev, self._splits, axis=1)):
            s, st = m._step(part, tokens, ctx)
            total = s if total is None else total + s
            states.append(st)
        return total, np.concatenate(states, axis=1)


def combine_ensemble(members: Sequence[Scorer]) -> Scorer:
    if len(members) == 1:
        return members[0]
    return EnsembleScorer(members)


class CountingScorer(Scorer):
    """Wraps a scorer and counts ``step`` calls and rows scored."""

    def __init__(self, inner: Scorer):
        self.inner = inner
        self.n_members = inner.n_members
        self.max_depth = inner.max_depth
        self.calls = 0
        self.rows = 0

    @property
    def vocab_size(self) -> int:
        return self.inner.vocab_size

    @property
    def state_width(self) -> int:
        return self.inner.state_width

    def _initial_state(self):
        return self.inner._initial_state()

    def _step(self, prev, tokens, ctx):
        self.calls += 1
        self.rows += len(tokens)
        return self.inner._step(prev, tokens, ctx)
