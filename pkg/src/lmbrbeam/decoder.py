"""Batched beam decoding for one sentence, optionally fused with an LMBR matrix.

The beam is also the model batch: every time step issues one scorer call
over ``B`` rows. Per step, the model block is scaled by lambda and the LMBR
rows for the ``B`` current histories are added, the running scores ``q`` are
added, constraints and early pruning mask candidates, the best ``B`` cells of
the flattened ``B x V`` matrix are kept, the model state rows are gathered to
follow them, and EOS candidates are moved to the finished set and masked so
they are never extended. Hypotheses are recovered through the backpointers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import EOS_ID, NEG_INF, START_ID, ContractError, DecodeError, DecoderConfig
from .lmbr import LmbrMatrix, lookup_history_rows
from .scorer import Scorer

#: ``mask(t, j)`` returns a boolean array over the vocabulary, True = forbidden
ConstraintMask = Callable[[int, int], np.ndarray]

HISTORY_LEN = 3


@dataclass(frozen=True)
class FinishedEntry:
    t: int
    j: int
    score: float


@dataclass(frozen=True)
class FallbackEntry:
    """Best EOS extension at step ``t`` of row ``parent`` from step ``t - 1``."""

    t: int
    parent: int
    score: float


@dataclass
class DecodeStats:
    steps_used: int = 0
    scorer_calls: int = 0
    finished_count: int = 0
    fallback_used: bool = False


@dataclass
class DecodeResult:
    tokens: Tuple[int, ...]
    score: float
    normalized_score: float
    stats: DecodeStats = field(default_factory=DecodeStats)


class Bookkeeping:
    """Per-step backpointers ``b``, tokens ``y`` and running scores ``q``.

    Step 0 holds the initialisation: every row points at row 0 with the start
    marker, row 0 scores 0 and the remaining rows are masked so the first
    expansion does not produce duplicates.
    """

    def __init__(self, beam_size: int):
        q0 = np.full(beam_size, NEG_INF)
        q0[0] = 0.0
        self.b: List[np.ndarray] = [np.zeros(beam_size, dtype=np.int64)]
        self.y: List[np.ndarray] = [np.full(beam_size, START_ID, dtype=np.int64)]
        self.q: List[np.ndarray] = [q0]

    def __len__(self) -> int:
        return len(self.y)

    def push(self, b, y, q) -> None:
        self.b.append(np.asarray(b))
        self.y.append(np.asarray(y))
        self.q.append(np.asarray(q))

    def history(self, t: int, j: int) -> Tuple[int, ...]:
        """Last ``min(3, t)`` tokens of the prefix extended at step ``t`` by row ``j``."""
        k = min(HISTORY_LEN, t)
        out = []
        tt, jj = t - 1, j
        while len(out) < k:
            out.append(int(self.y[tt][jj]))
            if tt == 0:
                break
            jj = int(self.b[tt][jj])
            tt -= 1
        return tuple(reversed(out))

    def tokens_to(self, t: int, j: int) -> List[int]:
        """Tokens y_1..y_t of the hypothesis ending in cell ``(t, j)``."""
        out = []
        while t > 0:
            out.append(int(self.y[t][j]))
            j = int(self.b[t][j])
            t -= 1
        out.reverse()
        return out


def max_steps(source_length: int, cfg: DecoderConfig) -> int:
    if source_length < 1:
        raise ContractError("source_length must be >= 1")
    # rounding guards against 2.0000000000000004-style overshoot before ceil
    return max(1, math.ceil(round(cfg.max_steps_slope * source_length + cfg.max_steps_offset, 9)))


def top_b(combined: np.ndarray, k: Optional[int] = None):
    """Best ``k`` cells of the flattened matrix (``k`` defaults to the row count).

    Ties go to the smaller flattened index ``row * V + column``.

    Returns
    -------
    b, y, q : ndarray
        Row index, column index and value of each selected cell, in
        non-increasing order of value.
    """
    combined = np.asarray(combined)
    if combined.ndim != 2:
        raise ContractError("top_b expects a matrix")
    R, V = combined.shape
    k = R if k is None else k
    flat = combined.ravel()
    if k > flat.size:
        raise ContractError(f"cannot select {k} of {flat.size} cells")
    if k < flat.size:
        part = np.argpartition(-flat, k - 1)[:k]
        cutoff = flat[part].min()
        cand = np.flatnonzero(flat >= cutoff)
    else:
        cand = np.arange(flat.size)
    order = cand[np.argsort(-flat[cand], kind="stable")][:k]
    return order // V, order % V, flat[order]


def gather_rows(m: np.ndarray, idx: Sequence[int]) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    m = np.asarray(m)
    if idx.size and (idx.min() < 0 or idx.max() >= m.shape[0]):
        raise ContractError(f"row index out of range for {m.shape[0]} rows")
    return m[idx]


def apply_eos_masking(y_t, q_t, t: int, F: List[FinishedEntry]):
    """Move EOS cells into ``F`` and mask their scores.

    Cells whose score is already the sentinel are padding, not hypotheses, and
    are not recorded.
    """
    q = np.array(q_t, dtype=np.float64)
    y_t = np.asarray(y_t)
    if not np.any(y_t == EOS_ID):
        return q, F
    for j in np.flatnonzero(np.asarray(y_t) == EOS_ID):
        if q[j] != NEG_INF:
            F.append(FinishedEntry(t, int(j), float(q[j])))
            q[j] = NEG_INF
    return q, F


def early_prune(combined: np.ndarray, width: float) -> np.ndarray:
    """Mask cells whose probability ratio to the best cell is below ``width``."""
    if not 0.0 <= width <= 1.0:
        raise ContractError("prune width must lie in [0, 1]")
    if width == 0.0:
        return combined
    best = combined.max()
    if best == NEG_INF:
        return combined
    out = combined.copy()
    out[out < best + math.log(width)] = NEG_INF
    return out


def apply_constraint_mask(combined: np.ndarray, mask: Optional[ConstraintMask], t: int) -> np.ndarray:
    if mask is None:
        return combined
    out = combined.copy()
    for j in range(out.shape[0]):
        out[j, np.asarray(mask(t, j), dtype=bool)] = NEG_INF
    return out


class TokenBlacklist:
    """Constraint forbidding a fixed token set at every step and row."""

    def __init__(self, tokens: Iterable[int], vocab_size: int):
        self.tokens = frozenset(int(t) for t in tokens)
        self._row = np.zeros(vocab_size, dtype=bool)
        self._row[list(self.tokens)] = True

    def __call__(self, t: int, j: int) -> np.ndarray:
        return self._row


def best_eos_extension(combined: np.ndarray, t: int) -> Optional[FallbackEntry]:
    """Single best finite EOS candidate of a step, for the fallback stack."""
    col = combined[:, EOS_ID]
    j = int(np.argmax(col))
    if col[j] == NEG_INF:
        return None
    return FallbackEntry(t, j, float(col[j]))


def _select(entries, trace, length_norm):
    """Best ``(tokens, score)``; only candidates tied on the best key are traced.

    ``entries`` are ``(length, score, handle)``; ties go to the
    lexicographically smallest token sequence.
    """
    keys = [s / n if length_norm else s for n, s, _ in entries]
    top = max(keys)
    tied = [trace(h) for k, (_, _, h) in zip(keys, entries) if k == top]
    return min(tied)


def backtrace_best(
    F: Sequence[FinishedEntry],
    book: Bookkeeping,
    length_norm: bool = False,
    fallback: Sequence[FallbackEntry] = (),
) -> DecodeResult:
    """Pick the best finished hypothesis and rebuild its tokens.

    With an empty ``F`` the fallback stack is used instead.
    """
    used_fallback = False
    if F:
        entries = [(e.t, e.score, e) for e in F]

        def trace(e):
            return tuple(book.tokens_to(e.t, e.j)), e.score

    elif fallback:
        used_fallback = True
        entries = [(e.t, e.score, e) for e in fallback]

        def trace(e):
            return tuple(book.tokens_to(e.t - 1, e.parent)) + (EOS_ID,), e.score

    else:
        raise DecodeError("dead beam: no EOS candidate was ever produced")
    tokens, score = _select(entries, trace, length_norm)
    norm = score / len(tokens) if length_norm else score
    stats = DecodeStats(
        steps_used=len(book) - 1,
        scorer_calls=len(book) - 1,
        finished_count=len(F),
        fallback_used=used_fallback,
    )
    return DecodeResult(tokens, score, norm, stats)


def step_limit(source_length: int, cfg: DecoderConfig, scorer: Scorer) -> int:
    T = max_steps(source_length, cfg)
    if scorer.max_depth is not None:
        T = min(T, scorer.max_depth)
    return T


def decode(
    source: Sequence[int],
    scorer: Scorer,
    lmbr: Optional[LmbrMatrix] = None,
    cfg: Optional[DecoderConfig] = None,
    mask: Optional[ConstraintMask] = None,
) -> DecodeResult:
    """Decode one sentence.

    Without ``lmbr`` this is a plain batched beam decoder and lambda is not
    applied. The start marker is never emitted.
    """
    cfg = cfg or DecoderConfig()
    B = cfg.beam_size
    ctx, s0 = scorer.init_source(source)
    if lmbr is not None and lmbr.vocab_size != scorer.vocab_size:
        raise ContractError("LMBR matrix and scorer disagree on vocabulary size")
    T = step_limit(len(ctx.tokens), cfg, scorer)
    lam = cfg.resolve_lambda(scorer.n_members)

    book = Bookkeeping(B)
    state = np.repeat(s0, B, axis=0)
    F: List[FinishedEntry] = []
    fallback: List[FallbackEntry] = []
    for t in range(1, T + 1):
        P, next_state = scorer.step(state, book.y[-1], ctx)
        if lmbr is not None:
            hist = [book.history(t, j) for j in range(B)]
            P = lam * P + lookup_history_rows(lmbr, hist)
        combined = P + book.q[-1][:, None]
        combined[:, START_ID] = NEG_INF
        combined = apply_constraint_mask(combined, mask, t)
        fb = best_eos_extension(combined, t)
        if fb is not None:
            fallback.append(fb)
        combined = early_prune(combined, cfg.prune_width)
        b, y, q = top_b(combined)
        state = gather_rows(next_state, b)
        q, F = apply_eos_masking(y, q, t, F)
        book.push(b, y, q)
        if np.all(q == NEG_INF):
            break
    return backtrace_best(F, book, cfg.length_norm, fallback)
