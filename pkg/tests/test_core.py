import json

import pytest
from hypothesis import given, strategies as st

from lmbrbeam import (
    ConfigError,
    DecoderConfig,
    FormatError,
    OutOfVocabularyError,
    decode_tokens,
    encode_tokens,
    load_config,
    load_vocabulary,
)
from lmbrbeam.core import config_to_dict, detokenize


class TestVocabulary:
    def test_line_number_is_id(self, vocab5):
        assert vocab5.size == 5
        assert vocab5.id("b") == 3

    def test_minimal(self):
        v = load_vocabulary("<s>\n</s>")
        assert v.size == 2
        assert v.tokens == ("<s>", "</s>")

    def test_trailing_newline_tolerated(self):
        assert load_vocabulary("<s>\n</s>\na\n").size == 3

    def test_duplicate(self):
        with pytest.raises(FormatError, match="duplicate"):
            load_vocabulary("<s>\n</s>\na\na")

    @pytest.mark.parametrize("text", ["</s>\n<s>\na", "a\nb", "<s>", ""])
    def test_missing_reserved(self, text):
        with pytest.raises(FormatError):
            load_vocabulary(text)

    def test_blank_line_rejected(self):
        with pytest.raises(FormatError):
            load_vocabulary("<s>\n</s>\n\na")


class TestEncode:
    def test_lookup(self, vocab5):
        assert encode_tokens(vocab5, ["a", "b", "</s>"]) == [2, 3, 1]

    def test_empty(self, vocab5):
        assert encode_tokens(vocab5, []) == []

    def test_oov_names_word(self, vocab5):
        with pytest.raises(OutOfVocabularyError) as exc:
            encode_tokens(vocab5, ["z"])
        assert exc.value.word == "z"
        assert "'z'" in str(exc.value)

    def test_detokenize_drops_eos(self, vocab5):
        assert detokenize(vocab5, [2, 3, 1]) == "a b"


words = st.lists(st.text(alphabet="abcdefgh", min_size=1, max_size=4), min_size=0, max_size=12, unique=True)


@given(words, st.data())
def test_round_trip(extra, data):
    v = load_vocabulary("\n".join(["<s>", "</s>"] + extra))
    seq = data.draw(st.lists(st.sampled_from(v.tokens), max_size=20))
    assert decode_tokens(v, encode_tokens(v, seq)) == seq


@given(words)
def test_reserved_ids_stable(extra):
    text = "\n".join(["<s>", "</s>"] + extra)
    a, b = load_vocabulary(text), load_vocabulary(text)
    assert a.id("<s>") == b.id("<s>") == 0
    assert a.id("</s>") == b.id("</s>") == 1
    assert a.tokens == b.tokens


class TestConfig:
    def test_defaults(self):
        cfg = DecoderConfig()
        assert cfg.beam_size == 12
        assert cfg.resolve_lambda(1) == 0.5

    def test_auto_lambda_two_members(self):
        assert DecoderConfig().resolve_lambda(2) == 0.25

    def test_explicit_lambda(self):
        assert DecoderConfig(lam=0.7).resolve_lambda(3) == 0.7

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"beam_size": 0},
            {"sentence_batch": 0},
            {"prune_width": 1.5},
            {"prune_width": -0.1},
            {"lam": "half"},
            {"lam": -1.0},
            {"theta": (1, 2, 3)},
            {"max_steps_slope": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            DecoderConfig(**kwargs)

    def test_json_round_trip(self, tmp_path):
        cfg = DecoderConfig(beam_size=4, lam=0.3, prune_width=0.01, length_norm=True)
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(config_to_dict(cfg)))
        assert load_config(p) == cfg

    def test_json_unknown_key(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text('{"beam": 3}')
        with pytest.raises(ConfigError):
            load_config(p)
