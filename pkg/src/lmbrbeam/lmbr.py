"""N-gram posteriors from an evidence n-best list and the history-keyed matrix L.

Posteriors use presence-indicator semantics: the posterior of an n-gram is
the total weight of evidence hypotheses that contain it at least once.
Hypotheses are padded with a single start marker before extraction so that
sentence-initial n-grams line up with the decoder's histories.

Each row of L belongs to one history (a context of 0 to 3 tokens) and holds,
for every vocabulary entry ``y``::

    theta[0] + sum_{n=1..4} theta[n] * P(last n-1 tokens of history + y)

The sparse posterior terms are accumulated first and the constant
``theta[0]`` is added to the dense matrix in one pass afterwards.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .core import EOS_ID, START_ID, ContractError, FormatError, Vocabulary

MAX_ORDER = 4

Ngram = Tuple[int, ...]


@dataclass(frozen=True)
class EvidenceSpace:
    """Weighted EOS-terminated hypotheses for one source sentence."""

    hypotheses: Tuple[Tuple[int, ...], ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        if not self.hypotheses:
            raise FormatError("evidence space is empty")
        if len(self.hypotheses) != len(self.weights):
            raise FormatError("one weight per hypothesis is required")
        for h in self.hypotheses:
            if not h or h[-1] != EOS_ID or EOS_ID in h[:-1]:
                raise FormatError(f"hypothesis {h} must contain exactly one EOS, at the end")
            if START_ID in h:
                raise FormatError(f"hypothesis {h} contains the start marker")
        if any(not 0.0 <= w <= 1.0 for w in self.weights):
            raise FormatError("weights must lie in [0, 1]")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise FormatError("weights must sum to 1")

    def __len__(self) -> int:
        return len(self.hypotheses)


def make_evidence(
    hypotheses: Iterable[Sequence[int]], weights: Iterable[float], log_weights: bool = False
) -> EvidenceSpace:
    """Validate and normalise raw hypotheses and weights.

    EOS is appended to hypotheses lacking it. With ``log_weights`` the weights
    are exponentiated (after shifting by their maximum) before normalising.
    """
    hyps = []
    for h in hypotheses:
        h = tuple(int(t) for t in h)
        if not h or h[-1] != EOS_ID:
            h = h + (EOS_ID,)
        hyps.append(h)
    w = [float(x) for x in weights]
    if not hyps:
        raise FormatError("evidence block is empty")
    if any(not math.isfinite(x) for x in w) and not log_weights:
        raise FormatError("weights must be finite")
    if log_weights:
        top = max(w)
        if not math.isfinite(top):
            raise FormatError("log weights must include a finite value")
        w = [math.exp(x - top) for x in w]
    if any(x < 0 for x in w):
        raise FormatError("negative evidence weight")
    total = math.fsum(w)
    if total <= 0:
        raise FormatError("evidence weights are all zero")
    return EvidenceSpace(tuple(hyps), tuple(x / total for x in w))


def load_evidence(records: Iterable[Mapping], v: Vocabulary, log_weights: bool = False) -> EvidenceSpace:
    """Build the evidence space for one source from parsed JSON records."""
    hyps, weights = [], []
    for rec in records:
        if not isinstance(rec, Mapping) or "weight" not in rec or not isinstance(rec.get("tokens"), list):
            raise FormatError(f"bad evidence record {rec!r}")
        try:
            weights.append(float(rec["weight"]))
        except (TypeError, ValueError):
            raise FormatError(f"bad evidence weight in {rec!r}") from None
        hyps.append(v.encode(rec["tokens"]))
    return make_evidence(hyps, weights, log_weights=log_weights)


def read_evidence_file(
    path: Union[str, Path], v: Vocabulary, log_weights: bool = False
) -> Dict[int, EvidenceSpace]:
    """Read a JSON Lines evidence file into ``{source_id: EvidenceSpace}``.

    Records for one source must be contiguous.
    """
    blocks: Dict[int, List[dict]] = {}
    order: List[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sid = int(rec["source_id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise FormatError(f"{path}:{lineno}: malformed evidence record") from None
            if sid not in blocks:
                blocks[sid] = []
                order.append(sid)
            elif order[-1] != sid:
                raise FormatError(f"{path}:{lineno}: records for source {sid} are not contiguous")
            blocks[sid].append(rec)
    return {sid: load_evidence(blocks[sid], v, log_weights) for sid in order}


def padded_ngrams(hyp: Sequence[int], max_order: int = MAX_ORDER) -> set:
    """Distinct n-grams (orders 1..max_order) of the start-padded hypothesis."""
    seq = (START_ID,) + tuple(hyp)
    grams = set()
    for n in range(1, max_order + 1):
        for i in range(len(seq) - n + 1):
            grams.add(seq[i : i + n])
    return grams


def compute_ngram_posteriors(e: EvidenceSpace) -> Dict[Ngram, float]:
    """Posterior of every n-gram that occurs in the evidence.

    Weights are summed with :func:`math.fsum` so the table does not depend on
    hypothesis order.
    """
    contrib: Dict[Ngram, List[float]] = defaultdict(list)
    for h, w in zip(e.hypotheses, e.weights):
        for g in padded_ngrams(h):
            contrib[g].append(w)
    return {g: math.fsum(ws) for g, ws in contrib.items()}


@dataclass(frozen=True)
class LmbrParams:
    theta: Tuple[float, float, float, float, float]
    max_order: int = MAX_ORDER

    def __post_init__(self):
        if self.max_order != MAX_ORDER:
            raise ContractError("max_order is fixed at 4")
        if len(self.theta) != MAX_ORDER + 1:
            raise ContractError("theta needs 5 entries")
        object.__setattr__(self, "theta", tuple(float(x) for x in self.theta))


@dataclass(frozen=True)
class LmbrMatrix:
    history_index: Dict[Ngram, int]
    rows: np.ndarray
    default_row: np.ndarray
    sparse: sp.csr_matrix = field(repr=False)
    sparse_updates: int = 0
    _table: np.ndarray = field(init=False, repr=False, compare=False)
    _row_cache: Dict[Ngram, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_table", np.vstack([self.rows, self.default_row[None, :]]))
        object.__setattr__(self, "_row_cache", {})

    @property
    def n_rows(self) -> int:
        """Rows built, counting the default row."""
        return len(self.history_index) + 1

    @property
    def vocab_size(self) -> int:
        return self.default_row.shape[0]

    def row_for(self, context: Sequence[int]) -> int:
        """Row number for ``context`` using longest-suffix fallback.

        Returns ``len(history_index)`` for the default row.
        """
        ctx = tuple(context)
        r = self._row_cache.get(ctx)
        if r is None:
            r = len(self.history_index)
            for i in range(len(ctx) + 1):
                hit = self.history_index.get(ctx[i:])
                if hit is not None:
                    r = hit
                    break
            self._row_cache[ctx] = r
        return r

    def save(self, path: Union[str, Path]) -> None:
        ctxs = sorted(self.history_index, key=self.history_index.get)
        np.savez(
            path,
            rows=self.rows,
            default_row=self.default_row,
            contexts=np.array([json.dumps(list(c)) for c in ctxs]),
            sparse_data=self.sparse.data,
            sparse_indices=self.sparse.indices,
            sparse_indptr=self.sparse.indptr,
            sparse_updates=self.sparse_updates,
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LmbrMatrix":
        with np.load(path) as z:
            ctxs = [tuple(json.loads(s)) for s in z["contexts"]]
            rows = z["rows"]
            sparse = sp.csr_matrix(
                (z["sparse_data"], z["sparse_indices"], z["sparse_indptr"]), shape=rows.shape
            )
            return cls(
                {c: i for i, c in enumerate(ctxs)},
                rows,
                z["default_row"],
                sparse,
                int(z["sparse_updates"]),
            )


def evidence_contexts(e: EvidenceSpace) -> set:
    """Distinct histories of length 0-3 that precede some token in the padded evidence."""
    ctxs = set()
    for h in e.hypotheses:
        for g in padded_ngrams(h):
            ctxs.add(g[:-1])
    return ctxs


def build_lmbr_matrix(
    p: Mapping[Ngram, float], e: EvidenceSpace, v: Union[Vocabulary, int], params: LmbrParams
) -> LmbrMatrix:
    V = v.size if isinstance(v, Vocabulary) else int(v)
    theta = params.theta
    ctxs = sorted(evidence_contexts(e), key=lambda c: (len(c), c))
    index = {c: i for i, c in enumerate(ctxs)}

    # continuations of each n-gram prefix that carry non-zero posterior
    cont: Dict[Ngram, List[Tuple[int, float]]] = defaultdict(list)
    for g, prob in p.items():
        if prob > 0.0 and 1 <= len(g) <= MAX_ORDER:
            if g[-1] >= V:
                raise ContractError(f"n-gram {g} outside vocabulary of size {V}")
            cont[g[:-1]].append((g[-1], prob))

    r_idx, c_idx, vals = [], [], []
    for c, r in index.items():
        for n in range(1, len(c) + 2):
            if theta[n] == 0.0:
                continue
            suffix = c[len(c) - (n - 1) :]
            for y, prob in cont.get(suffix, ()):
                r_idx.append(r)
                c_idx.append(y)
                vals.append(theta[n] * prob)
    # duplicates (same row/column from different orders) are summed by scipy
    sparse = sp.coo_matrix((vals, (r_idx, c_idx)), shape=(len(ctxs), V)).tocsr()
    rows = sparse.toarray() + theta[0]

    default = np.full(V, theta[0])
    if theta[1] != 0.0:
        uni = np.zeros(V)
        for y, prob in cont.get((), ()):
            uni[y] = prob
        default = default + theta[1] * uni
    return LmbrMatrix(index, rows, default, sparse, len(vals))


def lmbr_matrix_for(e: EvidenceSpace, v: Union[Vocabulary, int], theta: Sequence[float]) -> LmbrMatrix:
    """Posteriors plus matrix build in one call."""
    return build_lmbr_matrix(compute_ngram_posteriors(e), e, v, LmbrParams(tuple(theta)))


def lookup_history_rows(m: LmbrMatrix, histories: Sequence[Sequence[int]]) -> np.ndarray:
    """Fetch one L row per history, ``B x V``."""
    idx = [m.row_for(h) for h in histories]
    return m._table[idx]
