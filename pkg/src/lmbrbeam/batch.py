"""Sentence batching: N sentences share every scorer call.

Sentence ``n`` owns rows ``[n*B, (n+1)*B)`` of the stacked state and score
block. Selection, EOS handling and history tracking run blockwise, so each
sentence gets exactly the result it would get when decoded alone. Sentences
that finish keep their rows in the stack until the whole batch is done.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .core import EOS_ID, NEG_INF, START_ID, ContractError, DecodeError, DecoderConfig, LmbrBeamError
from .decoder import (
    Bookkeeping,
    ConstraintMask,
    DecodeResult,
    FallbackEntry,
    FinishedEntry,
    HISTORY_LEN,
    backtrace_best,
    step_limit,
)
from .lmbr import LmbrMatrix, lookup_history_rows
from .scorer import Scorer, SourceContext

log = logging.getLogger(__name__)


@dataclass
class BatchOutput:
    """Per-sentence results (or the error raised for that sentence) plus call accounting."""

    results: List[Union[DecodeResult, LmbrBeamError]]
    scorer_calls: int = 0
    rows_per_call: int = 0
    steps: List[int] = field(default_factory=list)

    def __iter__(self):
        return iter(self.results)

    def __len__(self) -> int:
        return len(self.results)

    def __getitem__(self, i):
        return self.results[i]


def per_sentence_top_b(stacked: np.ndarray, beam_size: int):
    """Apply top-B selection independently inside each ``B``-row block.

    ``stacked`` already includes the running scores. Ties go to the smaller
    flattened index within the block, as in :func:`decoder.top_b`.

    Returns
    -------
    b, y, q : ndarray, shape (N, B)
        Block-local row index, token and score.
    """
    stacked = np.asarray(stacked)
    R, V = stacked.shape
    B = beam_size
    if R % B:
        raise ContractError(f"{R} rows do not split into blocks of {B}")
    N = R // B
    neg = -stacked.reshape(N, B * V)
    if B < B * V:
        cutoff = np.partition(neg, B - 1, axis=1)[:, B - 1 : B]
        cand = neg <= cutoff
    else:
        cand = np.ones_like(neg, dtype=bool)
    r, c = np.nonzero(cand)
    vals = neg[r, c]
    o = np.lexsort((c, vals, r))
    r, c = r[o], c[o]
    counts = cand.sum(axis=1)
    starts = np.cumsum(counts) - counts
    rank = np.arange(len(r)) - starts[r]
    sel = c[rank < B].reshape(N, B)
    q = -np.take_along_axis(neg, sel, axis=1)
    return sel // V, sel % V, q


def bucket_by_length(corpus: Sequence[Sequence], max_batch: int) -> List[List[int]]:
    """Group sentence indices into batches of at most ``max_batch``, shortest first.

    Sorting is stable so equal-length sentences keep corpus order.
    """
    if max_batch < 1:
        raise ContractError("max_batch must be >= 1")
    order = sorted(range(len(corpus)), key=lambda i: len(corpus[i]))
    return [order[i : i + max_batch] for i in range(0, len(order), max_batch)]


def chunk(n_items: int, max_batch: int) -> List[List[int]]:
    """Consecutive batches in corpus order."""
    return [list(range(i, min(i + max_batch, n_items))) for i in range(0, n_items, max_batch)]


def decode_batch(
    sources: Sequence[Sequence[int]],
    scorer: Scorer,
    lmbrs: Optional[Sequence[Optional[LmbrMatrix]]] = None,
    cfg: Optional[DecoderConfig] = None,
    mask: Optional[ConstraintMask] = None,
    beam_batching: bool = True,
) -> BatchOutput:
    """Decode ``N`` sentences together with ``B*N`` model rows per step.

    With ``beam_batching=False`` every row is sent to the scorer in its own
    call, which is the unbatched baseline used for benchmarking; results are
    unchanged.
    """
    cfg = cfg or DecoderConfig()
    N = len(sources)
    if N < 1:
        raise ContractError("need at least one sentence")
    B = cfg.beam_size
    V = scorer.vocab_size
    lmbrs = list(lmbrs) if lmbrs is not None else [None] * N
    if len(lmbrs) != N:
        raise ContractError("one LMBR matrix slot per sentence is required")
    lam = cfg.resolve_lambda(scorer.n_members)

    errors: List[Optional[LmbrBeamError]] = [None] * N
    ctxs: List[SourceContext] = []
    inits = []
    limits = np.zeros(N, dtype=np.int64)
    for n, src in enumerate(sources):
        try:
            ctx, s0 = scorer.init_source(src)
            if lmbrs[n] is not None and lmbrs[n].vocab_size != V:
                raise ContractError("LMBR matrix and scorer disagree on vocabulary size")
            limits[n] = step_limit(len(ctx.tokens), cfg, scorer)
        except LmbrBeamError as exc:
            errors[n] = exc
            ctx, s0 = SourceContext((0,)), scorer._initial_state()
        ctxs.append(ctx)
        inits.append(np.repeat(s0, B, axis=0))
    state = np.concatenate(inits, axis=0)
    row_ctx = [c for c in ctxs for _ in range(B)]

    books = [Bookkeeping(B) for _ in range(N)]
    q = np.stack([bk.q[0] for bk in books])
    y_prev = np.full((N, B), START_ID, dtype=np.int64)
    # rolling window of the last three history tokens, -1 = before the start
    hist = np.full((N, B, HISTORY_LEN), -1, dtype=np.int64)
    hist[:, :, -1] = START_ID
    finished: List[List[FinishedEntry]] = [[] for _ in range(N)]
    fallback: List[List[FallbackEntry]] = [[] for _ in range(N)]
    active = np.array([e is None for e in errors])
    steps = np.zeros(N, dtype=np.int64)
    calls = 0

    t = 0
    while active.any():
        t += 1
        tokens = y_prev.ravel()
        if beam_batching:
            P, next_state = scorer.step(state, tokens, row_ctx)
            calls += 1
        else:
            parts = [scorer.step(state[i : i + 1], tokens[i : i + 1], row_ctx[i]) for i in range(N * B)]
            P = np.concatenate([p for p, _ in parts], axis=0)
            next_state = np.concatenate([s for _, s in parts], axis=0)
            calls += N * B
        P = P.reshape(N, B, V)

        act = np.flatnonzero(active)
        for n in act:
            if lmbrs[n] is not None:
                contexts = [tuple(x for x in h if x >= 0) for h in hist[n].tolist()]
                P[n] = lam * P[n] + lookup_history_rows(lmbrs[n], contexts)
        combined = P[act] + q[act][:, :, None]
        combined[:, :, START_ID] = NEG_INF
        if mask is not None:
            for j in range(B):
                combined[:, j, np.asarray(mask(t, j), dtype=bool)] = NEG_INF
        eos = combined[:, :, EOS_ID]
        best_eos = np.argmax(eos, axis=1)
        for k, n in enumerate(act):
            j = int(best_eos[k])
            if eos[k, j] != NEG_INF:
                fallback[n].append(FallbackEntry(t, j, float(eos[k, j])))
        if cfg.prune_width > 0.0:
            best = combined.max(axis=(1, 2))
            thresh = np.where(best == NEG_INF, NEG_INF, best + math.log(cfg.prune_width))
            combined[combined < thresh[:, None, None]] = NEG_INF

        b, y, qs = per_sentence_top_b(combined.reshape(-1, V), B)
        new_state = next_state.copy()
        new_state[(act[:, None] * B + np.arange(B)).ravel()] = next_state[(act[:, None] * B + b).ravel()]
        state = new_state
        hist[act] = np.concatenate([hist[act[:, None], b, 1:], y[:, :, None]], axis=2)
        y_prev[act] = y
        # EOS cells leave the beam; padding cells already at the sentinel are skipped
        done = (y == EOS_ID) & (qs != NEG_INF)
        for k, j in zip(*np.nonzero(done)):
            finished[act[k]].append(FinishedEntry(t, int(j), float(qs[k, j])))
        qs[done] = NEG_INF
        q[act] = qs
        steps[act] += 1
        for k, n in enumerate(act):
            books[n].push(b[k], y[k], qs[k])
        active[act] = (steps[act] < limits[act]) & np.any(qs != NEG_INF, axis=1)

    results: List[Union[DecodeResult, LmbrBeamError]] = []
    for n in range(N):
        if errors[n] is not None:
            results.append(errors[n])
            continue
        try:
            res = backtrace_best(finished[n], books[n], cfg.length_norm, fallback[n])
        except DecodeError as exc:
            results.append(exc)
            continue
        res.stats.scorer_calls = calls
        results.append(res)
    return BatchOutput(results, calls, N * B, [int(s) for s in steps])
