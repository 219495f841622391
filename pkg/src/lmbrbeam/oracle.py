"""Brute-force references for the decoder and the posterior computation.

Nothing here calls into the decoder, the LMBR matrix or the batching code.
Scores are recomputed term by term from the model, the evidence and theta.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .core import EOS_ID, START_ID, DecoderConfig, LmbrBeamError, TokenRangeError
from .lmbr import EvidenceSpace
from .scorer import Scorer


class OracleBudgetError(LmbrBeamError, RuntimeError):
    """The enumeration would exceed the configured budget."""


@dataclass(frozen=True)
class OracleBudget:
    max_vocab: int = 8
    max_steps: int = 8
    ceiling: int = 10**6

    def check(self, V: int, T: int) -> None:
        if V > self.max_vocab or T > self.max_steps or V**T > self.ceiling:
            raise OracleBudgetError(f"refusing to enumerate V={V}, T={T} (V^T={V ** T})")


def bruteforce_posteriors(e: EvidenceSpace) -> Dict[Tuple[int, ...], float]:
    """Posterior of each n-gram, scanning every hypothesis on its own."""
    padded = [(START_ID,) + tuple(h) for h in e.hypotheses]
    every = set()
    for seq in padded:
        for i in range(len(seq)):
            for n in range(1, 5):
                if i + n <= len(seq):
                    every.add(seq[i : i + n])
    table = {}
    for g in every:
        n = len(g)
        ws = []
        for seq, w in zip(padded, e.weights):
            if any(seq[i : i + n] == g for i in range(len(seq) - n + 1)):
                ws.append(w)
        table[g] = math.fsum(ws)
    return table


def _lmbr_gain(prefix: Tuple[int, ...], y: int, post: Dict, theta: Sequence[float]) -> float:
    # prefix includes the start marker; at most three history tokens are visible
    hist = prefix[-3:]
    total = theta[0]
    for n in range(1, 5):
        if n - 1 > len(hist):
            break
        gram = hist[len(hist) - (n - 1) :] + (y,)
        total += theta[n] * post.get(gram, 0.0)
    return total


def model_logprobs(tokens: Sequence[int], scorer: Scorer, source: Sequence[int]) -> np.ndarray:
    """Per-step model log-probability of ``tokens`` with a one-row batch."""
    ctx, state = scorer.init_source(source)
    prev = START_ID
    out = []
    for y in tokens:
        scores, state = scorer.step(state, [prev], ctx)
        out.append(scores[0, y])
        prev = y
    return np.array(out)


def score_hypothesis_eq2(
    tokens: Sequence[int],
    scorer: Scorer,
    source: Sequence[int],
    evidence: Optional[EvidenceSpace] = None,
    lam: float = 1.0,
    theta: Optional[Sequence[float]] = None,
    posteriors: Optional[Dict] = None,
) -> float:
    """Total fused score of a complete hypothesis.

    Sums ``L(history, y_t) + lam * log P(y_t | prefix)`` over the tokens. Without
    evidence the LMBR term and ``lam`` are dropped.
    """
    tokens = tuple(int(t) for t in tokens)
    V = scorer.vocab_size
    if not tokens or tokens[-1] != EOS_ID:
        raise ValueError("hypothesis must end with EOS")
    for t in tokens:
        if not 0 <= t < V:
            raise TokenRangeError(f"token {t} outside vocabulary of size {V}")
    logp = model_logprobs(tokens, scorer, source)
    if evidence is None:
        return math.fsum(logp)
    post = posteriors if posteriors is not None else bruteforce_posteriors(evidence)
    terms = []
    prefix = (START_ID,)
    for y, lp in zip(tokens, logp):
        terms.append(_lmbr_gain(prefix, y, post, theta) + lam * lp)
        prefix = prefix + (y,)
    return math.fsum(terms)


def enumerate_hypotheses(V: int, T: int):
    """Every EOS-terminated sequence of length 1..T without start markers."""
    words = range(EOS_ID + 1, V)
    for length in range(1, T + 1):
        for body in itertools.product(words, repeat=length - 1):
            yield body + (EOS_ID,)


def exhaustive_decode(
    source: Sequence[int],
    scorer: Scorer,
    evidence: Optional[EvidenceSpace],
    cfg: DecoderConfig,
    T: Optional[int] = None,
    budget: OracleBudget = OracleBudget(),
) -> Tuple[Tuple[int, ...], float]:
    """Exact argmax over all hypotheses up to length ``T``.

    ``T`` defaults to the configured length heuristic. Ties go to the
    lexicographically smallest sequence. Returns the tokens and the
    unnormalised score.
    """
    V = scorer.vocab_size
    if T is None:
        T = math.ceil(round(cfg.max_steps_slope * len(source) + cfg.max_steps_offset, 9))
        if scorer.max_depth is not None:
            T = min(T, scorer.max_depth)
    budget.check(V, T)
    lam = cfg.resolve_lambda(scorer.n_members)
    post = bruteforce_posteriors(evidence) if evidence is not None else None
    best = None
    for hyp in enumerate_hypotheses(V, T):
        s = score_hypothesis_eq2(hyp, scorer, source, evidence, lam, cfg.theta, post)
        key = s / len(hyp) if cfg.length_norm else s
        if best is None or key > best[0] or (key == best[0] and hyp < best[1]):
            best = (key, hyp, s)
    if best is None:
        raise OracleBudgetError("nothing to enumerate")
    return best[1], best[2]
