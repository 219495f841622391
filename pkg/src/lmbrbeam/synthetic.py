"""Seeded toy data: vocabularies, corpora, n-gram counts, evidence and recordings."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import EOS, EOS_ID, START, START_ID, Vocabulary
from .lmbr import EvidenceSpace, make_evidence
from .scorer import RecordedScorer


def toy_vocabulary(n_words: int) -> Vocabulary:
    return Vocabulary((START, EOS) + tuple(f"w{i}" for i in range(n_words)))


def random_logprob_rows(rng: np.random.Generator, rows: int, V: int, scale: float = 2.0) -> np.ndarray:
    x = rng.normal(scale=scale, size=(rows, V))
    return x - np.logaddexp.reduce(x, axis=1, keepdims=True)


def random_recorded_scorer(rng: np.random.Generator, V: int, T: int, scale: float = 2.0) -> RecordedScorer:
    """Prefix-conditioned recording covering every prefix up to depth ``T``."""
    return RecordedScorer(V, [random_logprob_rows(rng, V**d, V, scale) for d in range(T)])


def random_evidence(
    rng: np.random.Generator, V: int, n_hyps: int, max_len: int
) -> EvidenceSpace:
    """``n_hyps`` hypotheses of at most ``max_len`` tokens including EOS."""
    hyps = []
    for _ in range(n_hyps):
        # a two-token vocabulary has no words, only the empty hypothesis
        length = int(rng.integers(0, max_len)) if V > EOS_ID + 1 else 0
        hyps.append(list(rng.integers(EOS_ID + 1, V, size=length)) + [EOS_ID])
    weights = rng.uniform(0.05, 1.0, size=n_hyps)
    return make_evidence(hyps, weights)


def markov_corpus(
    rng: np.random.Generator, n_words: int, n_sentences: int, min_len: int, max_len: int, fanout: int = 3
) -> List[List[int]]:
    """Sentences from a sparse random first-order chain over word ids ``2..``."""
    ids = np.arange(EOS_ID + 1, EOS_ID + 1 + n_words)
    succ = {int(w): rng.choice(ids, size=min(fanout, n_words), replace=False) for w in ids}
    first = rng.choice(ids, size=min(fanout * 2, n_words), replace=False)
    corpus = []
    for _ in range(n_sentences):
        length = int(rng.integers(min_len, max_len + 1))
        w = int(rng.choice(first))
        sent = [w]
        while len(sent) < length:
            w = int(rng.choice(succ[w]))
            sent.append(w)
        corpus.append(sent)
    return corpus


def ngram_counts(corpus: Sequence[Sequence[int]], order: int) -> Dict[Tuple[int, ...], int]:
    """Counts of order-``order`` n-grams with ``order - 1`` start markers and a final EOS."""
    counts: Counter = Counter()
    for sent in corpus:
        seq = [START_ID] * (order - 1) + list(sent) + [EOS_ID]
        for i in range(len(seq) - order + 1):
            counts[tuple(seq[i : i + order])] += 1
    return dict(counts)


def noisy_nbest(
    rng: np.random.Generator,
    source: Sequence[int],
    V: int,
    n_hyps: int,
    sub_rate: float = 0.15,
    del_rate: float = 0.05,
) -> EvidenceSpace:
    """Evidence made of perturbed copies of ``source``, best copies weighted highest."""
    hyps = []
    costs = []
    for _ in range(n_hyps):
        out = []
        cost = 0.0
        for w in source:
            u = rng.random()
            if u < del_rate:
                cost += 1.0
                continue
            if u < del_rate + sub_rate:
                out.append(int(rng.integers(EOS_ID + 1, V)))
                cost += 1.0
            else:
                out.append(int(w))
        hyps.append(out + [EOS_ID])
        costs.append(cost + rng.random())
    weights = [math.exp(-c) for c in costs]
    return make_evidence(hyps, weights)


@dataclass
class ToyTask:
    vocab: Vocabulary
    corpus: List[List[int]]
    counts: Dict[Tuple[int, ...], int]
    order: int
    sources: List[List[int]]
    evidence: List[EvidenceSpace]


def toy_task(
    seed: int = 0,
    n_words: int = 30,
    n_sentences: int = 100,
    order: int = 3,
    min_len: int = 3,
    max_len: int = 10,
    n_hyps: int = 8,
    train_sentences: int = 400,
) -> ToyTask:
    """Language-model counts plus a test corpus with per-sentence evidence."""
    rng = np.random.default_rng(seed)
    vocab = toy_vocabulary(n_words)
    train = markov_corpus(rng, n_words, train_sentences, min_len, max_len)
    sources = markov_corpus(rng, n_words, n_sentences, min_len, max_len)
    evidence = [noisy_nbest(rng, s, vocab.size, n_hyps) for s in sources]
    return ToyTask(vocab, train, ngram_counts(train, order), order, sources, evidence)


def sample_nbest(seed: int = 7, n_hyps: int = 200, length: int = 18, n_alt: int = 2) -> Tuple[Vocabulary, EvidenceSpace]:
    """A phrase-table-like 200-best: a few positions have alternatives or may drop."""
    rng = np.random.default_rng(seed)
    n_words = length * (n_alt + 1)
    vocab = toy_vocabulary(n_words)
    base = list(range(EOS_ID + 1, EOS_ID + 1 + length))
    alts = {p: list(range(EOS_ID + 1 + length + p * n_alt, EOS_ID + 1 + length + (p + 1) * n_alt)) for p in range(length)}
    varying = sorted(rng.choice(length, size=length // 3, replace=False).tolist())
    hyps, costs, seen = [], [], set()
    while len(hyps) < n_hyps:
        out, cost = [], 0.0
        for p, w in enumerate(base):
            if p in varying:
                u = rng.random()
                if u < 0.1:
                    cost += 1.5
                    continue
                if u < 0.45:
                    out.append(alts[p][int(rng.integers(n_alt))])
                    cost += 1.0
                    continue
            out.append(w)
        h = tuple(out) + (EOS_ID,)
        if h in seen:
            continue
        seen.add(h)
        hyps.append(h)
        costs.append(cost)
    weights = [math.exp(-c) for c in costs]
    return vocab, make_evidence(hyps, weights)


def write_jsonl_evidence(path: Union[str, Path], vocab: Vocabulary, blocks: Sequence[Tuple[int, EvidenceSpace]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid, e in blocks:
            for h, w in zip(e.hypotheses, e.weights):
                fh.write(json.dumps({"source_id": sid, "weight": w, "tokens": vocab.decode(h)}) + "\n")


def write_counts(path: Union[str, Path], vocab: Vocabulary, counts: Dict[Tuple[int, ...], int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in sorted(counts):
            fh.write(f"{counts[g]}\t{' '.join(vocab.decode(g))}\n")


def write_corpus(path: Union[str, Path], vocab: Vocabulary, sentences: Sequence[Sequence[int]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(" ".join(vocab.decode(s)) + "\n")


def write_vocabulary(path: Union[str, Path], vocab: Vocabulary) -> None:
    Path(path).write_text("\n".join(vocab.tokens) + "\n", encoding="utf-8")


def write_toy_bundle(directory: Union[str, Path], task: Optional[ToyTask] = None) -> Dict[str, Path]:
    """Vocabulary, counts, corpus and evidence files for a toy task."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    task = task or toy_task()
    paths = {
        "vocab": d / "toy_vocab.txt",
        "counts": d / "toy_counts.tsv",
        "corpus": d / "toy_corpus.txt",
        "evidence": d / "toy_evidence.jsonl",
    }
    write_vocabulary(paths["vocab"], task.vocab)
    write_counts(paths["counts"], task.vocab, task.counts)
    write_corpus(paths["corpus"], task.vocab, task.sources)
    write_jsonl_evidence(paths["evidence"], task.vocab, list(enumerate(task.evidence)))
    return paths
