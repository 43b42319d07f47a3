"""Corpus readers for the column (tagging) and sparse (multiclass) text formats."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from bqo_struct.core.exceptions import CorpusParseError
from bqo_struct.tasks.base import FeatureBag, TaskInstance

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class LabelVocabulary:
    """Label strings in first-occurrence order; ids are positions."""

    labels: List[str] = field(default_factory=list)
    _ids: Dict[str, int] = field(default_factory=dict, repr=False)

    @classmethod
    def of(cls, labels: Sequence[str]) -> "LabelVocabulary":
        vocab = cls()
        for label in labels:
            vocab.id_for(label)
        return vocab

    def id_for(self, label: str) -> int:
        """Return the id of a label, appending it when unseen."""
        label_id = self._ids.get(label)
        if label_id is None:
            label_id = len(self.labels)
            self._ids[label] = label_id
            self.labels.append(label)
        return label_id

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class Corpus:
    instances: List[TaskInstance]
    labels: List[str]

    @property
    def num_labels(self) -> int:
        return len(self.labels)


def read_lines(path: PathLike) -> Iterator[Tuple[int, str]]:
    """
    Yield (line number, text) for every line of a UTF-8 file, without the line terminator.

    Raises:
        CorpusParseError: If a line is not valid UTF-8
        OSError: If the file cannot be read
    """
    with open(path, "rb") as handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise CorpusParseError(f"invalid UTF-8: {e.reason}", line_number) from e
            yield line_number, text.rstrip("\r\n")


def token_features(token: str) -> FeatureBag:
    """Fixed template set: lowercased form, 3-char prefix and suffix, digit and capital flags."""
    lower = token.lower()
    bag = [("w=" + lower, 1.0), ("p3=" + lower[:3], 1.0), ("s3=" + lower[-3:], 1.0)]
    if any(ch.isdigit() for ch in token):
        bag.append(("digit", 1.0))
    if token[:1].isupper():
        bag.append(("cap", 1.0))
    return tuple(bag)


def load_sequence_corpus(path: PathLike, labels: Optional[Sequence[str]] = None) -> Corpus:
    """
    Read a column corpus: one "token<TAB>tag" per line, blank lines between sequences.

    Args:
        path: UTF-8 corpus file
        labels: Existing label vocabulary; tags not in it get the next free ids

    Returns:
        Corpus with one instance per sequence and the (extended) label vocabulary

    Raises:
        CorpusParseError: On a line without exactly two tab-separated columns or with invalid
            UTF-8
        OSError: If the file cannot be read
    """
    vocab = LabelVocabulary.of(labels or [])
    instances: List[TaskInstance] = []
    tokens: List[FeatureBag] = []
    tags: List[int] = []

    def flush() -> None:
        if tokens:
            instances.append(TaskInstance(len(instances), tuple(tokens), tuple(tags)))
            tokens.clear()
            tags.clear()

    for line_number, line in read_lines(path):
        if not line.strip():
            flush()
            continue
        columns = line.split("\t")
        if len(columns) != 2 or not columns[0] or not columns[1]:
            raise CorpusParseError(
                f"expected 'token<TAB>tag', got {len(columns)} column(s)", line_number
            )
        tokens.append(token_features(columns[0]))
        tags.append(vocab.id_for(columns[1]))
    flush()
    logger.debug("Read %d sequences, %d labels from %s", len(instances), len(vocab), path)
    return Corpus(instances, vocab.labels)


def parse_sparse_line(line: str, line_number: int) -> Tuple[int, FeatureBag]:
    """Parse "label idx:val ..." with strictly increasing indices."""
    fields = line.split()
    try:
        label = int(fields[0])
    except ValueError as e:
        raise CorpusParseError(f"label is not an integer: {fields[0]!r}", line_number) from e
    if label < 0:
        raise CorpusParseError(f"label must be non-negative, got {label}", line_number)

    bag = []
    previous = -1
    for item in fields[1:]:
        index_text, sep, value_text = item.partition(":")
        if not sep:
            raise CorpusParseError(f"expected 'idx:val', got {item!r}", line_number)
        try:
            index = int(index_text)
            value = float(value_text)
        except ValueError as e:
            raise CorpusParseError(f"non-numeric feature {item!r}", line_number) from e
        if not math.isfinite(value):
            raise CorpusParseError(f"non-finite feature value {item!r}", line_number)
        if index <= previous:
            raise CorpusParseError(
                f"feature indices must increase strictly, got {index} after {previous}",
                line_number,
            )
        previous = index
        bag.append((f"i={index}", value))
    return label, tuple(bag)


def load_multiclass(path: PathLike, num_labels: Optional[int] = None) -> Corpus:
    """
    Read a sparse multiclass corpus, one "label idx:val idx:val ..." per line.

    Blank lines are skipped. Labels are integers used as ids directly.

    Args:
        path: UTF-8 corpus file
        num_labels: Minimum label count, e.g. a trained model's

    Returns:
        Corpus whose vocabulary is "0", "1", ... up to the largest label seen

    Raises:
        CorpusParseError: On a malformed line
        OSError: If the file cannot be read
    """
    instances: List[TaskInstance] = []
    largest = (num_labels or 0) - 1
    for line_number, line in read_lines(path):
        if not line.strip():
            continue
        label, bag = parse_sparse_line(line, line_number)
        largest = max(largest, label)
        instances.append(TaskInstance(len(instances), bag, label))
    return Corpus(instances, [str(label) for label in range(largest + 1)])
