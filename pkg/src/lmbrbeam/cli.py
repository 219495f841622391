"""Command-line harness.

Subcommands::

    lmbrbeam decode        decode a corpus, optionally with evidence n-best lists
    lmbrbeam bench         words-per-minute and scorer-call table over beams / batching
    lmbrbeam oracle-check  random toy instances checked against brute force
    lmbrbeam lmbr build    build LMBR matrices and report their size
    lmbrbeam lmbr inspect  summarise a saved matrix

Exit codes: 0 success, 1 decode or check failure, 2 usage or file error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import oracle
from .batch import bucket_by_length, chunk, decode_batch
from .core import (
    DecoderConfig,
    LmbrBeamError,
    Vocabulary,
    config_from_dict,
    detokenize,
    load_config,
    read_vocabulary,
)
from .decoder import DecodeResult, decode
from .lmbr import (
    EvidenceSpace,
    LmbrMatrix,
    build_lmbr_matrix,
    compute_ngram_posteriors,
    evidence_contexts,
    LmbrParams,
    make_evidence,
    read_evidence_file,
)
from .scorer import CountingScorer, NgramScorer, Scorer, combine_ensemble, load_recorded, read_counts
from .synthetic import random_evidence, random_recorded_scorer

log = logging.getLogger("lmbrbeam")


class UsageError(Exception):
    pass


@dataclass
class RunStats:
    wall_seconds: float = 0.0
    output_words: int = 0
    words_per_minute: float = 0.0
    scorer_calls: int = 0
    steps_total: int = 0
    lmbr_rows_built: int = 0
    fallback_count: int = 0
    peak_rows: int = 0
    sentences: int = 0
    failed: int = 0

    def finish(self) -> "RunStats":
        self.words_per_minute = self.output_words / self.wall_seconds * 60.0 if self.wall_seconds > 0 else 0.0
        return self


@dataclass
class CorpusRun:
    outputs: List[Optional[Tuple[int, ...]]]
    results: List[object]
    stats: RunStats
    errors: Dict[int, str] = field(default_factory=dict)


def parse_scorer_spec(spec: str, vocab: Vocabulary) -> Scorer:
    kind, sep, path = spec.partition(":")
    if not sep or kind not in ("ngram", "recorded"):
        raise UsageError(f"scorer must be ngram:FILE or recorded:FILE, got {spec!r}")
    if kind == "ngram":
        counts = read_counts(path, vocab)
        order = max((len(g) for g in counts), default=1)
        return NgramScorer(counts, order, vocab.size)
    sc = load_recorded(path)
    if sc.vocab_size != vocab.size:
        raise UsageError(f"{path}: vocab_size {sc.vocab_size} does not match vocabulary ({vocab.size})")
    return sc


def read_corpus(path, vocab: Vocabulary):
    """Encode each line; lines that fail to encode become exceptions in place."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            try:
                out.append(vocab.encode(line.split()))
            except LmbrBeamError as exc:
                out.append(exc)
    return out


def build_matrices(
    evidence: Dict[int, EvidenceSpace], n: int, vocab_size: int, theta
) -> Tuple[List[Optional[LmbrMatrix]], int, int]:
    mats: List[Optional[LmbrMatrix]] = [None] * n
    total = peak = 0
    params = LmbrParams(tuple(theta))
    for sid, e in evidence.items():
        if 0 <= sid < n:
            m = build_lmbr_matrix(compute_ngram_posteriors(e), e, vocab_size, params)
            mats[sid] = m
            total += m.n_rows
            peak = max(peak, m.n_rows)
    return mats, total, peak


def decode_corpus(
    sources: Sequence,
    scorer: Scorer,
    cfg: DecoderConfig,
    evidence: Optional[Dict[int, EvidenceSpace]] = None,
    sort_by_length: bool = False,
    beam_batching: bool = True,
    jobs: int = 1,
) -> CorpusRun:
    """Decode a corpus in sentence batches of ``cfg.sentence_batch``.

    ``sources`` may hold exceptions for lines that could not be encoded; those
    lines fail without being decoded. Output order always follows the input.
    """
    n = len(sources)
    t0 = time.perf_counter()
    mats, rows_built, peak = build_matrices(evidence or {}, n, scorer.vocab_size, cfg.theta)
    ok = [i for i in range(n) if not isinstance(sources[i], Exception)]
    N = cfg.sentence_batch
    if sort_by_length:
        groups = [[ok[i] for i in g] for g in bucket_by_length([sources[i] for i in ok], N)]
    else:
        groups = [[ok[i] for i in g] for g in chunk(len(ok), N)]

    def run(group):
        if len(group) == 1 and beam_batching:
            i = group[0]
            counted = CountingScorer(scorer)
            try:
                return [decode(sources[i], counted, mats[i], cfg)], counted.calls
            except LmbrBeamError as exc:
                return [exc], counted.calls
        out = decode_batch([sources[i] for i in group], scorer, [mats[i] for i in group], cfg, beam_batching=beam_batching)
        return out.results, out.scorer_calls

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(run, groups))
    else:
        done = [run(g) for g in groups]
    wall = time.perf_counter() - t0

    stats = RunStats(lmbr_rows_built=rows_built, peak_rows=peak, sentences=n)
    outputs: List[Optional[Tuple[int, ...]]] = [None] * n
    results: List[object] = list(sources)
    errors: Dict[int, str] = {i: str(sources[i]) for i in range(n) if isinstance(sources[i], Exception)}
    for group, (res, calls) in zip(groups, done):
        stats.scorer_calls += calls
        for i, r in zip(group, res):
            results[i] = r
            if isinstance(r, DecodeResult):
                outputs[i] = r.tokens
                stats.steps_total += r.stats.steps_used
                stats.fallback_count += int(r.stats.fallback_used)
                stats.output_words += len(r.tokens) - 1
            else:
                errors[i] = str(r)
    stats.failed = len(errors)
    stats.wall_seconds = wall
    return CorpusRun(outputs, results, stats.finish(), errors)


def _load_common(args):
    try:
        vocab = read_vocabulary(args.vocab)
        scorer = combine_ensemble([parse_scorer_spec(s, vocab) for s in args.scorer])
        cfg = load_config(args.config) if args.config else DecoderConfig()
        sources = read_corpus(args.input, vocab)
        evidence = None
        if args.evidence and not args.pure:
            evidence = read_evidence_file(args.evidence, vocab, log_weights=args.log_weights)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {exc.filename}") from None
    except (LmbrBeamError, OSError) as exc:
        raise UsageError(str(exc)) from None
    if args.evidence and args.pure:
        print("warning: --pure given, ignoring --evidence", file=sys.stderr)
    if getattr(args, "beam", None):
        cfg = cfg.with_(beam_size=args.beam)
    if getattr(args, "batch_sentences", None):
        cfg = cfg.with_(sentence_batch=args.batch_sentences)
    return vocab, scorer, cfg, sources, evidence


def cmd_decode(args) -> int:
    vocab, scorer, cfg, sources, evidence = _load_common(args)
    run = decode_corpus(sources, scorer, cfg, evidence, args.sort_by_length, jobs=args.jobs)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for i, toks in enumerate(run.outputs):
            out.write((detokenize(vocab, toks) if toks is not None else "") + "\n")
    finally:
        if args.output:
            out.close()
    for i, msg in sorted(run.errors.items()):
        print(f"line {i + 1}: {msg}", file=sys.stderr)
    if args.stats_out:
        Path(args.stats_out).write_text(json.dumps(asdict(run.stats), indent=2) + "\n", encoding="utf-8")
    return 1 if run.errors else 0


BENCH_HEADER = ["beam", "batched", "sentences", "wpm", "scorer_calls", "peak_rows"]


def bench_rows(
    sources,
    scorer: Scorer,
    cfg: DecoderConfig,
    evidence,
    beams: Sequence[int],
    sentences: Sequence[int],
    repeat: int = 1,
    sort_by_length: bool = True,
    include_unbatched: bool = True,
) -> List[dict]:
    """One row per beam and batching mode, timing the best of ``repeat`` runs."""
    rows = []
    for beam in beams:
        modes = [(False, 1)] if include_unbatched else []
        modes += [(True, n) for n in sentences]
        for batched, n in modes:
            c = cfg.with_(beam_size=beam, sentence_batch=n)
            best = None
            for _ in range(max(1, repeat)):
                run = decode_corpus(sources, scorer, c, evidence, sort_by_length, beam_batching=batched)
                if best is None or run.stats.wall_seconds < best.stats.wall_seconds:
                    best = run
            rows.append(
                {
                    "beam": beam,
                    "batched": int(batched),
                    "sentences": n,
                    "wpm": round(best.stats.words_per_minute, 1),
                    "scorer_calls": best.stats.scorer_calls,
                    "peak_rows": best.stats.peak_rows,
                    "wall_seconds": best.stats.wall_seconds,
                }
            )
    return rows


def _int_list(text: str) -> List[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def cmd_bench(args) -> int:
    vocab, scorer, cfg, sources, evidence = _load_common(args)
    rows = bench_rows(
        sources,
        scorer,
        cfg,
        evidence,
        args.beams,
        args.sentences,
        args.repeat,
        sort_by_length=not args.no_sort,
        include_unbatched=not args.skip_unbatched,
    )
    out = open(args.output, "w", encoding="utf-8", newline="") if args.output else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=BENCH_HEADER, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.output:
            out.close()
    return 0


# -- oracle check -----------------------------------------------------------


def random_case(seed: int, index: int) -> dict:
    rng = np.random.default_rng([seed, index])
    V = int(rng.integers(3, 5))
    T = int(rng.integers(1, 5))
    sc = random_recorded_scorer(rng, V, T)
    evs = [random_evidence(rng, V, int(rng.integers(2, 6)), T + 1) for _ in range(3)]
    return {
        "seed": seed,
        "case": index,
        "V": V,
        "T": T,
        "recording": sc.to_json(),
        "evidence": [{"hypotheses": [list(h) for h in e.hypotheses], "weights": list(e.weights)} for e in evs],
        "theta": rng.uniform(0, 1, 5).tolist(),
        "lambda": [0.25, 0.5, 1.0][int(rng.integers(3))],
        "source_length": int(rng.integers(1, 5)),
    }


def check_case(case: dict, mutate_theta: bool = False) -> List[str]:
    """Run every check on one case, returning failure descriptions."""
    V, T = case["V"], case["T"]
    sc = load_recorded(case["recording"])
    evs = [make_evidence(e["hypotheses"], e["weights"]) for e in case["evidence"]]
    theta = tuple(case["theta"])
    lam = case["lambda"]
    cfg = DecoderConfig(beam_size=V**T, lam=lam, theta=theta, max_steps_slope=T, max_steps_offset=T)
    decoder_theta = (theta[0] + 0.5,) + theta[1:] if mutate_theta else theta
    src = [2] * case["source_length"]
    fails = []

    for k, e in enumerate(evs):
        if compute_ngram_posteriors(e) != oracle.bruteforce_posteriors(e):
            fails.append(f"posteriors differ for evidence {k}")

    mats = [build_lmbr_matrix(compute_ngram_posteriors(e), e, V, LmbrParams(decoder_theta)) for e in evs]
    res = decode(src, sc, mats[0], cfg)
    best, best_score = oracle.exhaustive_decode(src, sc, evs[0], cfg, T)
    if res.tokens != best or abs(res.score - best_score) > 1e-9:
        fails.append(f"decode {res.tokens}/{res.score!r} != exhaustive {best}/{best_score!r}")

    singles = [res] + [decode(src, sc, m, cfg) for m in mats[1:]]
    for r, e in zip(singles, evs):
        s = oracle.score_hypothesis_eq2(r.tokens, sc, src, e, lam, theta)
        if abs(s - r.score) > 1e-9:
            fails.append(f"score self-consistency: decoder {r.score!r} vs recomputed {s!r}")
            break

    batched = decode_batch([src] * len(mats), sc, mats, cfg)
    for k, (a, b) in enumerate(zip(singles, batched)):
        if not isinstance(b, DecodeResult) or a.tokens != b.tokens or a.score != b.score:
            fails.append(f"batched result {k} differs from sequential")
    return fails


def cmd_oracle_check(args) -> int:
    if args.replay:
        cases = [json.loads(Path(args.replay).read_text(encoding="utf-8"))]
    else:
        cases = (random_case(args.seed, i) for i in range(args.cases))
    n = 0
    for case in cases:
        fails = check_case(case, mutate_theta=args.mutate_theta)
        n += 1
        if fails:
            print(f"case {case['case']}: FAIL ({'; '.join(fails)})")
            print(json.dumps(case), file=sys.stderr)
            print(f"{n} cases run, first failure at case {case['case']}")
            return 1
        print(f"case {case['case']}: PASS")
    print(f"{n} cases run, all passed")
    return 0


# -- lmbr -------------------------------------------------------------------


def cmd_lmbr_build(args) -> int:
    try:
        vocab = read_vocabulary(args.vocab)
        cfg = load_config(args.config) if args.config else DecoderConfig()
        evidence = read_evidence_file(args.evidence, vocab, log_weights=args.log_weights)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {exc.filename}") from None
    except LmbrBeamError as exc:
        raise UsageError(str(exc)) from None
    params = LmbrParams(cfg.theta)
    for sid, e in evidence.items():
        if args.source_id is not None and sid != args.source_id:
            continue
        m = build_lmbr_matrix(compute_ngram_posteriors(e), e, vocab, params)
        print(
            json.dumps(
                {
                    "source_id": sid,
                    "hypotheses": len(e),
                    "contexts": len(evidence_contexts(e)),
                    "lmbr_rows_built": m.n_rows,
                    "sparse_updates": m.sparse_updates,
                    "nonzero": int(m.sparse.nnz),
                }
            )
        )
        if args.out:
            m.save(args.out if args.source_id is not None else f"{args.out}.{sid}.npz")
    return 0


def cmd_lmbr_inspect(args) -> int:
    try:
        m = LmbrMatrix.load(args.matrix)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {exc.filename}") from None
    info = {
        "lmbr_rows_built": m.n_rows,
        "vocab_size": m.vocab_size,
        "nonzero": int(m.sparse.nnz),
        "sparse_updates": m.sparse_updates,
        "contexts_by_length": {
            str(k): sum(1 for c in m.history_index if len(c) == k) for k in range(4)
        },
    }
    print(json.dumps(info, indent=2))
    return 0


def _add_inputs(p, bench: bool = False):
    p.add_argument("--vocab", required=True)
    p.add_argument("--scorer", required=True, action="append", help="ngram:FILE or recorded:FILE; repeat for an ensemble")
    p.add_argument("--input", required=True, help="one whitespace-tokenized sentence per line")
    p.add_argument("--evidence", help="JSON Lines n-best evidence keyed by zero-based line number")
    p.add_argument("--log-weights", action="store_true", help="evidence weights are log-domain")
    p.add_argument("--config", help="JSON decoder config")
    p.add_argument("--pure", action="store_true", help="ignore evidence, plain beam decoding")
    p.add_argument("--output", "-o")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmbrbeam", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode a corpus")
    _add_inputs(p)
    p.add_argument("--beam", type=int)
    p.add_argument("--batch-sentences", type=int, help="sentences decoded together (N)")
    p.add_argument("--sort-by-length", action="store_true")
    p.add_argument("--stats-out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="throughput table over beam sizes and batching")
    _add_inputs(p)
    p.add_argument("--beams", type=_int_list, default=[4, 8, 12])
    p.add_argument("--sentences", type=_int_list, default=[1], help="sentence batch sizes for batched rows")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--skip-unbatched", action="store_true")
    p.add_argument("--no-sort", action="store_true", help="do not sort the corpus by length")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle-check", help="compare against brute force on random toy instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--replay", help="re-run one serialized failing case")
    p.add_argument("--mutate-theta", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("lmbr", help="build or inspect LMBR matrices")
    lsub = p.add_subparsers(dest="lmbr_command", required=True)
    b = lsub.add_parser("build")
    b.add_argument("--vocab", required=True)
    b.add_argument("--evidence", required=True)
    b.add_argument("--config")
    b.add_argument("--log-weights", action="store_true")
    b.add_argument("--source-id", type=int)
    b.add_argument("--out", help="save matrices as .npz")
    b.set_defaults(func=cmd_lmbr_build)
    i = lsub.add_parser("inspect")
    i.add_argument("matrix")
    i.set_defaults(func=cmd_lmbr_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lmbrbeam: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
