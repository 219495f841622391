"""Batched beam decoding fused with LMBR n-gram posteriors."""

from importlib import resources
from pathlib import Path

from .batch import BatchOutput, bucket_by_length, decode_batch, per_sentence_top_b
from .core import (
    EOS_ID,
    NEG_INF,
    START_ID,
    ConfigError,
    ContractError,
    DecodeError,
    DecoderConfig,
    FormatError,
    LmbrBeamError,
    OutOfVocabularyError,
    TokenRangeError,
    Vocabulary,
    decode_tokens,
    encode_tokens,
    load_config,
    load_vocabulary,
    read_vocabulary,
)
from .decoder import (
    DecodeResult,
    TokenBlacklist,
    apply_constraint_mask,
    apply_eos_masking,
    backtrace_best,
    decode,
    early_prune,
    gather_rows,
    max_steps,
    top_b,
)
from .lmbr import (
    EvidenceSpace,
    LmbrMatrix,
    LmbrParams,
    build_lmbr_matrix,
    compute_ngram_posteriors,
    lmbr_matrix_for,
    load_evidence,
    lookup_history_rows,
    make_evidence,
    read_evidence_file,
)
from .scorer import (
    EnsembleScorer,
    NgramScorer,
    RecordedScorer,
    Scorer,
    build_ngram_scorer,
    combine_ensemble,
    load_recorded,
    read_counts,
)

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path of a bundled sample file, e.g. ``data_path("sample_evidence.jsonl")``."""
    return Path(str(resources.files(__package__) / "data" / name))
