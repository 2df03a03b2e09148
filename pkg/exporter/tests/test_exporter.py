"""Exporter conformance: job files, sentence parity with the pipeline
splitter, .semb byte compatibility, pinned-revision reproducibility, and
the document-mode baseline.

The pipeline package (`multibert`) appears here only as the validating
counterpart — its reader must parse our bytes and its splitter must agree
with our sentence counts.  The exporter sources never import it.
"""

import hashlib
import json
import logging

import numpy as np
import pytest

from semb_exporter import (
    DimensionDriftError,
    ExportJob,
    JobError,
    ModelResolutionError,
    create_reference_model,
    directory_digest,
    export_document_embeddings,
    export_embeddings,
    load_job,
    resolve_model,
)
from semb_exporter import cli
from semb_exporter.sentences import corpus_book_ids, dump_sentences

from multibert.corpus import build_documents, fill_defaults, load_books
from multibert.embedstore import read_embeddings

FIELD_DEFAULTS = {"description": "", "language_code": "", "average_rating": 0.0}


def pipeline_sentences(corpus_path):
    """book_id -> sentences, computed by the pipeline's own library code."""
    records = fill_defaults(load_books(corpus_path).records, FIELD_DEFAULTS)
    return {d.book_id: list(d.sentences) for d in build_documents(records)}


def make_job(tmp_path, corpus, model, digest=None, **overrides):
    kwargs = dict(
        corpus=corpus,
        model=str(model),
        revision=digest,
        output=tmp_path / "out.semb",
    )
    kwargs.update(overrides)
    return ExportJob(**kwargs)


def write_corpus_rows(path, rows):
    """Well-formed book records around (book_id, description) pairs."""
    lines = []
    for book_id, description in rows:
        lines.append(
            json.dumps(
                {
                    "book_id": book_id,
                    "title": f"Title of {book_id}",
                    "description": description,
                    "authors": ["A. Writer"],
                    "is_ebook": False,
                    "ratings_count": 10,
                    "popular_shelves": [{"name": "fiction", "count": 3}],
                }
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestJobFile:
    def test_loads_with_defaults(self, tmp_path):
        path = tmp_path / "job.json"
        path.write_text(
            json.dumps({"corpus": "books.jsonl", "model": "m", "output": "out.semb"})
        )
        job = load_job(path)
        assert job.batch_size == 32
        assert job.device == "cpu"
        assert job.revision is None
        assert job.max_sentences_per_document is None
        assert job.manifest_path.name == "out.semb.manifest.json"

    def test_missing_required_field(self, tmp_path):
        path = tmp_path / "job.json"
        path.write_text(json.dumps({"corpus": "books.jsonl", "model": "m"}))
        with pytest.raises(JobError, match="output"):
            load_job(path)

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "job.json"
        path.write_text(
            json.dumps(
                {"corpus": "c", "model": "m", "output": "o", "normalise": True}
            )
        )
        with pytest.raises(JobError, match="normalise"):
            load_job(path)

    def test_bad_batch_size(self, tmp_path):
        path = tmp_path / "job.json"
        path.write_text(
            json.dumps({"corpus": "c", "model": "m", "output": "o", "batch_size": 0})
        )
        with pytest.raises(JobError, match="batch_size"):
            load_job(path)

    def test_missing_file_and_bad_json(self, tmp_path):
        with pytest.raises(JobError, match="not found"):
            load_job(tmp_path / "absent.json")
        broken = tmp_path / "broken.json"
        broken.write_text("{nope")
        with pytest.raises(JobError, match="JSON"):
            load_job(broken)


class TestSentenceParity:
    def test_dump_matches_pipeline_splitter_exactly(self, books_fixture):
        ours = dump_sentences(books_fixture)
        theirs = pipeline_sentences(books_fixture)
        assert ours == theirs

    def test_corpus_ids_ordered_and_deduplicated(self, tmp_path):
        corpus = tmp_path / "books.jsonl"
        corpus.write_text(
            '{"book_id": "z9"}\n'
            "not json at all\n"
            '{"book_id": "a1"}\n'
            '{"book_id": "z9"}\n'
            '{"no_id": true}\n',
            encoding="utf-8",
        )
        assert corpus_book_ids(corpus) == ["z9", "a1"]


class TestModelResolution:
    def test_reference_model_digest_is_reproducible(self, tmp_path):
        d1 = create_reference_model(tmp_path / "m1", hidden_size=32, seed=0)
        d2 = create_reference_model(tmp_path / "m2", hidden_size=32, seed=0)
        d3 = create_reference_model(tmp_path / "m3", hidden_size=32, seed=1)
        assert d1 == d2
        assert d1 != d3

    def test_resolve_reports_directory_digest(self, reference_model):
        path, digest = reference_model
        handle = resolve_model(str(path), None)
        assert handle.revision == digest == directory_digest(path)
        assert handle.dim == 32

    def test_pinned_revision_mismatch_refused(self, reference_model):
        path, _ = reference_model
        with pytest.raises(ModelResolutionError, match="revision mismatch"):
            resolve_model(str(path), "0" * 64)

    def test_missing_local_directory(self, tmp_path):
        with pytest.raises(ModelResolutionError, match="not found"):
            resolve_model(str(tmp_path / "no" / "model"), None)

    def test_embed_batch_shape_and_dtype(self, reference_model):
        path, digest = reference_model
        handle = resolve_model(str(path), digest)
        out = handle.embed_batch(["A fox.", "Two mossy stones by the stream."])
        assert out.shape == (2, 32)
        assert out.dtype == np.float32


@pytest.fixture(scope="module")
def exported(tmp_path_factory, books_fixture, reference_model):
    """One sentence-mode export of the shared corpus, reused across checks."""
    tmp = tmp_path_factory.mktemp("export")
    path, digest = reference_model
    job = make_job(tmp, books_fixture, path, digest, batch_size=4)
    manifest = export_embeddings(job)
    return job, manifest


class TestSentenceExport:
    def test_output_parses_with_pipeline_reader(self, exported):
        job, manifest = exported
        sets = read_embeddings(job.output)
        assert len(sets) == manifest["records"]
        assert all(s.dim == 32 for s in sets)
        assert all(s.vectors.dtype == np.float32 for s in sets)

    def test_sentence_counts_match_pipeline_splitter(self, exported, books_fixture):
        job, manifest = exported
        expected = pipeline_sentences(books_fixture)
        got = {s.book_id: s.vectors.shape[0] for s in read_embeddings(job.output)}
        assert got == {bid: len(sents) for bid, sents in expected.items()}
        assert manifest["sentences"] == sum(len(s) for s in expected.values())

    def test_zero_sentence_book_skipped_with_warning(
        self, tmp_path, books_fixture, reference_model, caplog
    ):
        path, digest = reference_model
        job = make_job(tmp_path, books_fixture, path, digest)
        with caplog.at_level(logging.WARNING, logger="semb_exporter"):
            manifest = export_embeddings(job)
        assert manifest["skipped"] == ["b004"]  # the fixture's null-description book
        assert "b004" not in {s.book_id for s in read_embeddings(job.output)}
        assert any("b004" in record.message for record in caplog.records)

    def test_pinned_rerun_produces_identical_digest(
        self, tmp_path, books_fixture, reference_model, exported
    ):
        path, digest = reference_model
        job2 = make_job(tmp_path, books_fixture, path, digest, batch_size=4)
        manifest2 = export_embeddings(job2)
        job1, manifest1 = exported
        d1 = hashlib.sha256(job1.output.read_bytes()).hexdigest()
        d2 = hashlib.sha256(job2.output.read_bytes()).hexdigest()
        assert d1 == d2
        assert manifest1 == manifest2

    def test_vectors_are_unnormalized_model_output(self, exported):
        job, _ = exported
        norms = np.concatenate(
            [np.linalg.norm(s.vectors, axis=1) for s in read_embeddings(job.output)]
        )
        assert np.all(norms > 0)
        assert np.abs(norms - 1.0).max() > 0.1  # nobody L2-normalized these

    def test_batch_size_does_not_change_vectors(
        self, tmp_path, books_fixture, reference_model, exported
    ):
        path, digest = reference_model
        job_small = make_job(tmp_path, books_fixture, path, digest, batch_size=2)
        export_embeddings(job_small)
        job_big, _ = exported  # batch_size=4
        small = {s.book_id: s.vectors for s in read_embeddings(job_small.output)}
        big = {s.book_id: s.vectors for s in read_embeddings(job_big.output)}
        assert small.keys() == big.keys()
        for bid in big:
            np.testing.assert_allclose(small[bid], big[bid], atol=1e-5)

    def test_max_sentences_truncates_from_the_front(
        self, tmp_path, books_fixture, reference_model, exported
    ):
        path, digest = reference_model
        job = make_job(
            tmp_path, books_fixture, path, digest, max_sentences_per_document=1
        )
        export_embeddings(job)
        truncated = {s.book_id: s.vectors for s in read_embeddings(job.output)}
        full_job, _ = exported
        full = {s.book_id: s.vectors for s in read_embeddings(full_job.output)}
        assert truncated.keys() == full.keys()
        for bid, vectors in truncated.items():
            assert vectors.shape[0] == 1
            np.testing.assert_allclose(vectors[0], full[bid][0], atol=1e-5)

    def test_dimension_drift_aborts(self, tmp_path, books_fixture):
        class DriftingHandle:
            identifier = "drifter"
            revision = "r0"
            dim = 8

            def embed_batch(self, texts):
                self.dim += 1  # second batch comes back wider
                return np.zeros((len(texts), self.dim - 1), dtype=np.float32)

        job = make_job(tmp_path, books_fixture, "drifter", batch_size=2)
        with pytest.raises(DimensionDriftError, match="after starting with"):
            export_embeddings(job, handle=DriftingHandle())

    def test_unresolvable_model_aborts(self, tmp_path, books_fixture):
        job = make_job(tmp_path, books_fixture, "missing_dir/nope")
        with pytest.raises(ModelResolutionError, match="not found"):
            export_embeddings(job)


class TestDocumentExport:
    def test_one_vector_per_book(self, tmp_path, books_fixture, reference_model):
        path, digest = reference_model
        job = make_job(tmp_path, books_fixture, path, digest)
        manifest = export_document_embeddings(job)
        sets = read_embeddings(job.output)
        expected_books = len(pipeline_sentences(books_fixture))
        assert len(sets) == expected_books == manifest["records"]
        assert all(s.vectors.shape == (1, 32) for s in sets)
        assert manifest["mode"] == "document"

    def test_duplicates_identical_and_near_duplicates_closer(
        self, tmp_path, reference_model
    ):
        path, digest = reference_model
        corpus = tmp_path / "books.jsonl"
        text_a = "The little fox ran over the green hill. It slept in the moss."
        text_b = "The little fox ran over the green hills. It slept in the moss."
        text_c = "Spreadsheet macros automate quarterly tax reconciliation workflows."
        write_corpus_rows(
            corpus,
            [("dup1", text_a), ("dup2", text_a), ("near", text_b), ("far", text_c)],
        )

        job = make_job(tmp_path, corpus, path, digest)
        export_document_embeddings(job)
        vec = {s.book_id: s.vectors[0].astype(np.float64) for s in read_embeddings(job.output)}

        def cos(a, b):
            return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

        assert np.array_equal(vec["dup1"], vec["dup2"])
        assert cos(vec["dup1"], vec["near"]) > cos(vec["dup1"], vec["far"])


class TestCLI:
    def _write_job(self, tmp_path, books_fixture, model, digest):
        job = tmp_path / "job.json"
        job.write_text(
            json.dumps(
                {
                    "corpus": str(books_fixture),
                    "model": str(model),
                    "revision": digest,
                    "output": str(tmp_path / "cli.semb"),
                    "batch_size": 8,
                }
            ),
            encoding="utf-8",
        )
        return job

    def test_sentence_mode(self, tmp_path, books_fixture, reference_model, capsys):
        path, digest = reference_model
        job = self._write_job(tmp_path, books_fixture, path, digest)
        assert cli.main([str(job)]) == 0
        out = capsys.readouterr().out
        assert "records=" in out and "dim=32" in out
        assert (tmp_path / "cli.semb").exists()
        assert (tmp_path / "cli.semb.manifest.json").exists()

    def test_document_mode(self, tmp_path, books_fixture, reference_model, capsys):
        path, digest = reference_model
        job = self._write_job(tmp_path, books_fixture, path, digest)
        assert cli.main([str(job), "--documents"]) == 0
        manifest = json.loads((tmp_path / "cli.semb.manifest.json").read_text())
        assert manifest["mode"] == "document"

    def test_bad_job_exits_nonzero(self, tmp_path, capsys):
        assert cli.main([str(tmp_path / "absent.json")]) == 1
        assert capsys.readouterr().err.startswith("error: JobError:")

    def test_unresolvable_model_exits_nonzero(self, tmp_path, books_fixture, capsys):
        job = self._write_job(tmp_path, books_fixture, "missing_dir/nope", None)
        assert cli.main([str(job)]) == 1
        assert "ModelResolutionError" in capsys.readouterr().err
