"""Tests for the corpus readers."""

import pytest

from bqo_struct.cli.corpus import (
    LabelVocabulary,
    load_multiclass,
    load_sequence_corpus,
    parse_sparse_line,
    token_features,
)
from bqo_struct.core.exceptions import CorpusParseError


def write(tmp_path, text, name="corpus.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_label_vocabulary_first_occurrence_order():
    """Test ids follow first occurrence."""
    vocab = LabelVocabulary.of(["B", "A", "B"])
    assert vocab.labels == ["B", "A"]
    assert vocab.id_for("A") == 1
    assert vocab.id_for("C") == 2
    assert len(vocab) == 3


def test_token_features():
    """Test the fixed feature templates."""
    assert dict(token_features("Paris9")) == {
        "w=paris9": 1.0,
        "p3=par": 1.0,
        "s3=is9": 1.0,
        "digit": 1.0,
        "cap": 1.0,
    }
    assert [name for name, _ in token_features("to")] == ["w=to", "p3=to", "s3=to"]


class TestSequenceCorpus:
    """Test the column format reader."""

    def test_two_sequences(self, tmp_path):
        """Test blank lines separate sequences and tags get ids in order."""
        path = write(tmp_path, "The\tDT\ncat\tNN\n\nRuns\tVB\n")
        corpus = load_sequence_corpus(path)
        assert len(corpus.instances) == 2
        assert corpus.labels == ["DT", "NN", "VB"]
        assert corpus.num_labels == 3
        assert corpus.instances[0].gold == (0, 1)
        assert corpus.instances[1].gold == (2,)
        assert corpus.instances[1].instance_id == 1

    def test_repeated_blank_lines(self, tmp_path):
        """Test extra blank lines do not create empty sequences."""
        path = write(tmp_path, "\n\na\tX\n\n\n\nb\tY\n\n")
        assert len(load_sequence_corpus(path).instances) == 2

    def test_existing_vocabulary_extended(self, tmp_path):
        """Test tags unseen in the given vocabulary get the next ids."""
        path = write(tmp_path, "a\tNEW\nb\tOLD\n")
        corpus = load_sequence_corpus(path, ["OLD"])
        assert corpus.labels == ["OLD", "NEW"]
        assert corpus.instances[0].gold == (1, 0)

    @pytest.mark.parametrize(
        "line",
        ["onlytoken", "a\tb\tc", "\tNN", "tok\t"],
        ids=["one", "three", "no-token", "no-tag"],
    )
    def test_bad_line_reports_line_number(self, tmp_path, line):
        """Test malformed lines raise with their line number."""
        path = write(tmp_path, f"ok\tNN\n\n{line}\n")
        with pytest.raises(CorpusParseError, match="line 3") as info:
            load_sequence_corpus(path)
        assert info.value.line_number == 3

    def test_invalid_utf8(self, tmp_path):
        """Test undecodable bytes raise a parse error on their line."""
        path = tmp_path / "corpus.txt"
        path.write_bytes(b"the\tD\n\xff\xfe\tN\n\n")
        with pytest.raises(CorpusParseError, match="line 2: invalid UTF-8") as info:
            load_sequence_corpus(path)
        assert info.value.line_number == 2

    def test_crlf_line_endings(self, tmp_path):
        """Test Windows line endings are stripped."""
        path = tmp_path / "corpus.txt"
        path.write_bytes(b"a\tX\r\nb\tY\r\n\r\n")
        corpus = load_sequence_corpus(path)
        assert corpus.labels == ["X", "Y"]
        assert corpus.instances[0].gold == (0, 1)

    def test_missing_file(self, tmp_path):
        """Test a missing file raises OSError."""
        with pytest.raises(OSError):
            load_sequence_corpus(tmp_path / "absent.txt")


class TestSparseCorpus:
    """Test the sparse multiclass reader."""

    def test_parse_line(self):
        """Test a valid sparse line."""
        label, bag = parse_sparse_line("2 1:0.5 7:-1", 1)
        assert label == 2
        assert bag == (("i=1", 0.5), ("i=7", -1.0))

    def test_label_only(self):
        """Test a line without features yields an empty bag."""
        assert parse_sparse_line("0", 4) == (0, ())

    @pytest.mark.parametrize(
        "line, message",
        [
            ("x 1:1", "not an integer"),
            ("-1 1:1", "non-negative"),
            ("0 1-1", "idx:val"),
            ("0 a:1", "non-numeric"),
            ("0 3:1 3:2", "increase strictly"),
            ("0 4:1 2:1", "increase strictly"),
            ("0 1:nan", "non-finite"),
            ("0 1:1 2:inf", "non-finite"),
            ("0 1:-inf", "non-finite"),
        ],
    )
    def test_bad_lines(self, line, message):
        """Test malformed sparse lines."""
        with pytest.raises(CorpusParseError, match=message):
            parse_sparse_line(line, 9)

    def test_load_skips_blank_lines(self, tmp_path):
        """Test blank lines are skipped and labels span 0..max."""
        path = write(tmp_path, "0 1:1\n\n3 2:1\n")
        corpus = load_multiclass(path)
        assert [inst.gold for inst in corpus.instances] == [0, 3]
        assert corpus.labels == ["0", "1", "2", "3"]

    def test_minimum_label_count(self, tmp_path):
        """Test a model's label count widens the vocabulary."""
        path = write(tmp_path, "1 1:1\n")
        assert load_multiclass(path, num_labels=5).num_labels == 5

    def test_invalid_utf8(self, tmp_path):
        """Test undecodable bytes in a sparse corpus."""
        path = tmp_path / "corpus.txt"
        path.write_bytes(b"0 1:1\n1 2:\xe9\n")
        with pytest.raises(CorpusParseError, match="line 2: invalid UTF-8"):
            load_multiclass(path)

    def test_error_line_number(self, tmp_path):
        """Test the reported line counts blank lines."""
        path = write(tmp_path, "0 1:1\n\n1 2:x\n")
        with pytest.raises(CorpusParseError, match="line 3"):
            load_multiclass(path)
