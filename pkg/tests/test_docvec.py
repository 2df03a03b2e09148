"""Document vectors: encoder pooling, sentence-mean pooling, composition."""

import numpy as np
import pytest

from multibert.docvec import (
    compose_all,
    compose_docvec,
    encoder_docvec,
    encoder_docvecs,
    sentence_docvec,
)
from multibert.embedstore import SentenceEmbeddingSet
from multibert.encoder import EncoderConfig, forward, init_model
from multibert.errors import ContractError, EmptyDocumentError, NotFoundError, ShapeError
from multibert.sequencer import TokenSequence, TokenVocabulary, pad_batch

CFG = EncoderConfig(
    vocab_size=10, hidden_size=8, n_layers=1, n_heads=2, ffn_size=16, max_positions=12, seed=0
)
VOCAB = TokenVocabulary(6)


class TestSentenceDocvec:
    def test_single_row_is_identity(self):
        row = np.array([[1.0, -2.0, 0.5]], np.float32)
        np.testing.assert_allclose(sentence_docvec(row), row[0], atol=1e-7)

    def test_opposite_rows_cancel(self):
        rows = np.array([[1.0, 2.0], [-1.0, -2.0]], np.float32)
        np.testing.assert_array_equal(sentence_docvec(rows), np.zeros(2, np.float32))

    def test_matches_scalar_mean(self):
        rng = np.random.default_rng(0)
        rows = rng.standard_normal((7, 5)).astype(np.float32)
        got = sentence_docvec(rows)
        want = [sum(float(rows[i, j]) for i in range(7)) / 7 for j in range(5)]
        np.testing.assert_allclose(got, want, atol=1e-6)
        assert got.dtype == np.float32

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        rows = rng.standard_normal((6, 4)).astype(np.float32)
        np.testing.assert_allclose(
            sentence_docvec(rows), sentence_docvec(rows[::-1].copy()), atol=1e-6
        )

    def test_empty_rejected(self):
        with pytest.raises(EmptyDocumentError):
            sentence_docvec(np.zeros((0, 4), np.float32))

    def test_non_matrix_rejected(self):
        with pytest.raises(ShapeError):
            sentence_docvec(np.zeros(4, np.float32))


class TestEncoderPooling:
    def test_single_cluster_token_mean_equals_its_hidden_state(self):
        model = init_model(CFG)
        seq = TokenSequence("b", (VOCAB.bos, 3, VOCAB.eos))
        tokens, mask = pad_batch([seq], VOCAB)
        hidden, _ = forward(model, tokens, mask)
        got = encoder_docvec(model, seq, pooling="mean")
        np.testing.assert_allclose(got, hidden[0, 1], atol=1e-6)

    def test_mean_matches_scalar_average_over_cluster_positions(self):
        model = init_model(CFG)
        seq = TokenSequence("b", (VOCAB.bos, 0, 5, 2, VOCAB.eos))
        tokens, mask = pad_batch([seq], VOCAB)
        hidden, _ = forward(model, tokens, mask)
        got = encoder_docvec(model, seq, pooling="mean")
        want = [
            sum(float(hidden[0, t, j]) for t in (1, 2, 3)) / 3
            for j in range(CFG.hidden_size)
        ]
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_bos_pooling_takes_first_position(self):
        model = init_model(CFG)
        seq = TokenSequence("b", (VOCAB.bos, 1, 4, VOCAB.eos))
        tokens, mask = pad_batch([seq], VOCAB)
        hidden, _ = forward(model, tokens, mask)
        got = encoder_docvec(model, seq, pooling="bos")
        np.testing.assert_allclose(got, hidden[0, 0], atol=1e-6)

    def test_framing_only_sequence_falls_back_to_bos(self):
        model = init_model(CFG)
        seq = TokenSequence("b", (VOCAB.bos, VOCAB.eos))
        tokens, mask = pad_batch([seq], VOCAB)
        hidden, _ = forward(model, tokens, mask)
        got = encoder_docvec(model, seq, pooling="mean")
        np.testing.assert_allclose(got, hidden[0, 0], atol=1e-6)

    def test_batch_size_does_not_change_vectors(self):
        rng = np.random.default_rng(2)
        model = init_model(CFG)
        seqs = [
            TokenSequence(f"b{i}", (VOCAB.bos, *rng.integers(0, 6, rng.integers(1, 8)).tolist(), VOCAB.eos))
            for i in range(9)
        ]
        small = encoder_docvecs(model, seqs, batch_size=2)
        big = encoder_docvecs(model, seqs, batch_size=16)
        np.testing.assert_allclose(small, big, atol=2e-5)

    def test_unknown_pooling_rejected(self):
        model = init_model(CFG)
        with pytest.raises(ContractError, match="pooling"):
            encoder_docvecs(model, [TokenSequence("b", (VOCAB.bos, VOCAB.eos))], pooling="max")

    def test_empty_sequence_list_rejected(self):
        model = init_model(CFG)
        with pytest.raises(ContractError):
            encoder_docvecs(model, [])


class TestCompose:
    def test_concatenation_order_and_width(self):
        enc = np.array([1.0, 2.0, 3.0, 4.0], np.float32)
        sent = np.array([5.0, 6.0, 7.0], np.float32)
        v = compose_docvec(enc, sent)
        assert v.shape == (7,)
        np.testing.assert_array_equal(v[:4], enc)
        np.testing.assert_array_equal(v[4:], sent)
        assert v.dtype == np.float32

    def test_parts_recoverable_by_slicing(self):
        rng = np.random.default_rng(3)
        enc, sent = rng.standard_normal(8).astype(np.float32), rng.standard_normal(5).astype(np.float32)
        v = compose_docvec(enc, sent)
        np.testing.assert_array_equal(v[:8], enc)
        np.testing.assert_array_equal(v[8:], sent)

    def test_non_vector_parts_rejected(self):
        with pytest.raises(ShapeError):
            compose_docvec(np.zeros((2, 2), np.float32), np.zeros(3, np.float32))


class TestComposeAll:
    def _fixtures(self, n=4, dim=5):
        rng = np.random.default_rng(4)
        seqs, sets = [], []
        for i in range(n):
            body = rng.integers(0, 6, rng.integers(1, 5)).tolist()
            seqs.append(TokenSequence(f"b{i}", (VOCAB.bos, *body, VOCAB.eos)))
            rows = rng.standard_normal((len(body), dim)).astype(np.float32)
            sets.append(SentenceEmbeddingSet(f"b{i}", dim, rows))
        return seqs, sets

    def test_order_width_and_parts(self):
        model = init_model(CFG)
        seqs, sets = self._fixtures()
        ids, matrix = compose_all(model, seqs, sets)
        assert ids == [s.book_id for s in seqs]
        assert matrix.shape == (4, CFG.hidden_size + 5)
        assert matrix.dtype == np.float32
        enc = encoder_docvecs(model, seqs)
        np.testing.assert_allclose(matrix[:, : CFG.hidden_size], enc, atol=1e-6)
        for i, s in enumerate(sets):
            np.testing.assert_allclose(
                matrix[i, CFG.hidden_size :], sentence_docvec(s.vectors), atol=1e-6
            )

    def test_embedding_set_order_is_irrelevant(self):
        model = init_model(CFG)
        seqs, sets = self._fixtures()
        _, a = compose_all(model, seqs, sets)
        _, b = compose_all(model, seqs, list(reversed(sets)))
        np.testing.assert_array_equal(a, b)

    def test_missing_embeddings_rejected(self):
        model = init_model(CFG)
        seqs, sets = self._fixtures()
        with pytest.raises(NotFoundError, match="b2"):
            compose_all(model, seqs, [s for s in sets if s.book_id != "b2"])
