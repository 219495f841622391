import json

import numpy as np
import pytest

from lmbrbeam import (
    EvidenceSpace,
    FormatError,
    LmbrMatrix,
    LmbrParams,
    build_lmbr_matrix,
    compute_ngram_posteriors,
    data_path,
    load_evidence,
    lookup_history_rows,
    make_evidence,
    read_evidence_file,
    read_vocabulary,
)
from lmbrbeam.lmbr import evidence_contexts, lmbr_matrix_for
from lmbrbeam.oracle import bruteforce_posteriors
from lmbrbeam.synthetic import random_evidence

A, B_, C, EOS = 2, 3, 4, 1
THETA = (0.1, 0.2, 0.3, 0.4, 0.0)


class TestEvidence:
    def test_normalisation(self):
        e = make_evidence([[2, 1], [3, 1]], [3, 2])
        assert e.weights == pytest.approx((0.6, 0.4))

    def test_singleton(self):
        assert make_evidence([[2, 1]], [7.5]).weights == (1.0,)

    def test_negative_weight(self):
        with pytest.raises(FormatError):
            make_evidence([[2, 1], [3, 1]], [-1, 2])

    def test_empty_block(self):
        with pytest.raises(FormatError):
            make_evidence([], [])

    def test_eos_appended(self):
        assert make_evidence([[2, 3]], [1]).hypotheses == ((2, 3, 1),)

    def test_eos_inside_rejected(self):
        with pytest.raises(FormatError):
            make_evidence([[2, 1, 3, 1]], [1])

    def test_log_weights(self):
        e = make_evidence([[2, 1], [3, 1]], [np.log(3), np.log(1)], log_weights=True)
        assert e.weights == pytest.approx((0.75, 0.25))

    def test_load_records(self, vocab5):
        e = load_evidence([{"weight": 3, "tokens": ["a", "b"]}, {"weight": 2, "tokens": ["a", "c", "</s>"]}], vocab5)
        assert e.hypotheses == ((A, B_, EOS), (A, C, EOS))

    def test_file_contiguity(self, tmp_path, vocab5):
        p = tmp_path / "e.jsonl"
        lines = [
            {"source_id": 0, "weight": 1, "tokens": ["a"]},
            {"source_id": 1, "weight": 1, "tokens": ["b"]},
            {"source_id": 0, "weight": 1, "tokens": ["c"]},
        ]
        p.write_text("\n".join(json.dumps(x) for x in lines))
        with pytest.raises(FormatError, match="contiguous"):
            read_evidence_file(p, vocab5)

    def test_file_malformed(self, tmp_path, vocab5):
        p = tmp_path / "e.jsonl"
        p.write_text("{not json}\n")
        with pytest.raises(FormatError):
            read_evidence_file(p, vocab5)


class TestPosteriors:
    def test_worked_example(self, worked_evidence):
        p = compute_ngram_posteriors(worked_evidence)
        assert p[(A,)] == pytest.approx(1.0)
        assert p[(B_,)] == pytest.approx(0.6)
        assert p[(A, B_)] == pytest.approx(0.6)
        assert p[(A, C)] == pytest.approx(0.4)
        assert p[(EOS,)] == pytest.approx(1.0)

    def test_singleton_all_one(self):
        e = make_evidence([[2, 3, 4, 2, 1]], [1])
        assert set(compute_ngram_posteriors(e).values()) == {1.0}

    def test_presence_not_count(self):
        e = make_evidence([[A, A, EOS]], [1])
        assert compute_ngram_posteriors(e)[(A,)] == 1.0

    def test_start_padded(self, worked_evidence):
        p = compute_ngram_posteriors(worked_evidence)
        assert p[(0, A, B_)] == pytest.approx(0.6)
        assert max(len(g) for g in p) == 4

    def test_disjoint_half(self):
        e = make_evidence([[2, 3, 1], [4, 5, 1]], [1, 1])
        p = compute_ngram_posteriors(e)
        shared = {(0,), (1,)}
        assert all(v == 0.5 for g, v in p.items() if not any(x in shared for x in [g[:1], g[-1:]]) and 1 not in g and 0 not in g)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            e = random_evidence(rng, 6, int(rng.integers(1, 11)), 8)
            assert compute_ngram_posteriors(e) == bruteforce_posteriors(e)


class TestMatrix:
    @pytest.fixture
    def m(self, worked_evidence):
        return lmbr_matrix_for(worked_evidence, 5, THETA)

    def test_worked_entries(self, m):
        row = m.rows[m.history_index[(0, A)]]
        assert row[B_] == pytest.approx(0.64, abs=1e-12)
        assert row[C] == pytest.approx(0.1 + 0.2 * 0.4 + 0.3 * 0.4 + 0.4 * 0.4, abs=1e-12)
        assert row[C] == pytest.approx(0.46, abs=1e-12)

    def test_zero_theta(self, worked_evidence):
        m = lmbr_matrix_for(worked_evidence, 5, (0, 0, 0, 0, 0))
        assert not m.rows.any() and not m.default_row.any()

    def test_absent_token_is_theta0(self, worked_evidence):
        m = lmbr_matrix_for(make_evidence([[A, 1]], [1]), 6, THETA)
        # token 5 never occurs in the evidence
        np.testing.assert_array_equal(m.rows[:, 5], 0.1)
        assert m.default_row[5] == 0.1

    def test_row_count_is_contexts_plus_default(self, worked_evidence, m):
        assert m.n_rows == len(evidence_contexts(worked_evidence)) + 1

    def test_sample_bound(self):
        v = read_vocabulary(data_path("sample_vocab.txt"))
        (e,) = read_evidence_file(data_path("sample_evidence.jsonl"), v).values()
        assert len(e) == 200
        m = lmbr_matrix_for(e, v, THETA)
        assert m.n_rows <= len(evidence_contexts(e)) + 1
        assert m.n_rows <= 500

    def test_save_load(self, tmp_path, m):
        p = tmp_path / "m.npz"
        m.save(p)
        back = LmbrMatrix.load(p)
        np.testing.assert_array_equal(back.rows, m.rows)
        assert back.history_index == m.history_index
        assert back.sparse_updates == m.sparse_updates

    def test_max_order_fixed(self):
        with pytest.raises(Exception):
            LmbrParams(THETA, max_order=3)


class TestLookup:
    @pytest.fixture
    def m(self, worked_evidence):
        return lmbr_matrix_for(worked_evidence, 5, THETA)

    def test_exact_hit(self, m):
        out = lookup_history_rows(m, [(0, A)])
        np.testing.assert_array_equal(out[0], m.rows[m.history_index[(0, A)]])

    def test_full_fallback(self):
        # c never occurs, so neither (b, c) nor (c) is a context
        m = lmbr_matrix_for(make_evidence([[A, B_, EOS]], [1]), 5, THETA)
        assert (B_, C) not in m.history_index and (C,) not in m.history_index
        np.testing.assert_array_equal(lookup_history_rows(m, [(B_, C)])[0], m.default_row)

    def test_suffix_fallback_matches_direct_formula(self, m, worked_evidence):
        out = lookup_history_rows(m, [(C, A)])[0]
        p = bruteforce_posteriors(worked_evidence)
        # direct evaluation of the (c, a) formula: no evidence n-gram has context (c, a)
        direct = [
            THETA[0] + THETA[1] * p.get((y,), 0) + THETA[2] * p.get((A, y), 0) + THETA[3] * p.get((C, A, y), 0)
            for y in range(5)
        ]
        np.testing.assert_allclose(out, direct, atol=1e-15)
        np.testing.assert_array_equal(out, m.rows[m.history_index[(A,)]])

    def test_rows_are_independent_copies(self, m):
        out = lookup_history_rows(m, [(0,), (0,)])
        out[0, 0] = 99.0
        assert m.rows[m.history_index[(0,)], 0] != 99.0


class TestBuildOrder:
    def test_sparse_pass_touches_only_nonzero_posteriors(self, worked_evidence):
        theta = (0.1, 0.2, 0.3, 0.4, 0.5)
        m = lmbr_matrix_for(worked_evidence, 5, theta)
        p = bruteforce_posteriors(worked_evidence)
        expected = 0
        for ctx in m.history_index:
            for n in range(1, len(ctx) + 2):
                suffix = ctx[len(ctx) - (n - 1) :]
                expected += sum(1 for y in range(5) if p.get(suffix + (y,), 0.0) > 0)
        assert m.sparse_updates == expected
        np.testing.assert_allclose(m.sparse.toarray() + theta[0], m.rows, atol=0)

    def test_zero_theta_order_skipped(self, worked_evidence):
        full = lmbr_matrix_for(worked_evidence, 5, (0.1, 0.2, 0.3, 0.4, 0.5))
        part = lmbr_matrix_for(worked_evidence, 5, (0.1, 0.2, 0.3, 0.4, 0.0))
        assert part.sparse_updates < full.sparse_updates

    def test_permutation_invariant(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            e = random_evidence(rng, 7, 6, 6)
            perm = rng.permutation(len(e))
            # same weights, no renormalisation
            f = EvidenceSpace(tuple(e.hypotheses[i] for i in perm), tuple(e.weights[i] for i in perm))
            a, b = lmbr_matrix_for(e, 7, THETA), lmbr_matrix_for(f, 7, THETA)
            assert a.history_index == b.history_index
            np.testing.assert_array_equal(a.rows, b.rows)
