"""Parallel TSV and M2 corpus handling.

Sentences are assumed pre-tokenized: tokens are split on single spaces and
all comparisons are case-sensitive.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

NONE_FIELD = "-NONE-"
NOOP = "noop"


class CorpusError(ValueError):
    """Raised for malformed parallel or M2 input."""


class M2ParseError(CorpusError):
    def __init__(self, block: int, message: str):
        super().__init__(f"block {block}: {message}")
        self.block = block


def tokenize(text: str) -> tuple[str, ...]:
    if text == "":
        return ()
    return tuple(text.split(" "))


@dataclass(frozen=True)
class ParallelExample:
    id: int
    source: tuple[str, ...]
    target: tuple[str, ...]

    def __post_init__(self):
        if not self.source or not self.target:
            raise CorpusError(f"example {self.id}: source and target must be nonempty")

    @property
    def identical(self) -> bool:
        return self.source == self.target

    @property
    def source_text(self) -> str:
        return " ".join(self.source)

    @property
    def target_text(self) -> str:
        return " ".join(self.target)


def parse_parallel(text: str) -> list[ParallelExample]:
    """Parse tab-separated source/target lines; ids follow file order."""
    examples = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if line.endswith("\r"):
            line = line[:-1]
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise CorpusError(f"line {lineno}: expected 2 tab-separated fields, got {len(fields)}")
        src, tgt = fields
        if not src.strip() or not tgt.strip():
            raise CorpusError(f"line {lineno}: empty source or target")
        examples.append(ParallelExample(len(examples), tokenize(src), tokenize(tgt)))
    return examples


def write_parallel(examples) -> str:
    return "".join(f"{ex.source_text}\t{ex.target_text}\n" for ex in examples)


def deduplicate(examples) -> list[ParallelExample]:
    """Drop exact (source, target) repeats, keeping first occurrences, and renumber."""
    seen = set()
    kept = []
    for ex in examples:
        key = (ex.source, ex.target)
        if key in seen:
            continue
        seen.add(key)
        kept.append(ParallelExample(len(kept), ex.source, ex.target))
    return kept


def partition_identical(examples) -> tuple[list[ParallelExample], list[ParallelExample]]:
    changed, identical = [], []
    for ex in examples:
        (identical if ex.identical else changed).append(ex)
    return changed, identical


@dataclass(frozen=True)
class GoldEdit:
    start: int
    end: int
    etype: str
    correction: tuple[str, ...]
    annotator: int = 0
    required: str = "REQUIRED"
    comment: str = NONE_FIELD

    @property
    def is_noop(self) -> bool:
        return self.start == -1 and self.end == -1

    @property
    def key(self) -> tuple[int, int, tuple[str, ...]]:
        return (self.start, self.end, self.correction)

    def to_line(self) -> str:
        corr = " ".join(self.correction) if self.correction else NONE_FIELD
        return (
            f"A {self.start} {self.end}|||{self.etype}|||{corr}|||"
            f"{self.required}|||{self.comment}|||{self.annotator}"
        )


@dataclass(frozen=True)
class AnnotatedSentence:
    source: tuple[str, ...]
    edits: tuple[GoldEdit, ...] = ()

    def annotators(self) -> list[int]:
        return sorted({e.annotator for e in self.edits})

    def by_annotator(self) -> dict[int, list[GoldEdit]]:
        """Edits grouped by annotator id, noop edits included."""
        groups: dict[int, list[GoldEdit]] = defaultdict(list)
        for e in self.edits:
            groups[e.annotator].append(e)
        return dict(sorted(groups.items()))

    def gold_sets(self) -> dict[int, frozenset]:
        """Per-annotator sets of (start, end, correction) keys, noops removed.

        A sentence with no annotation lines counts as one annotator with no edits.
        """
        groups = self.by_annotator()
        if not groups:
            return {0: frozenset()}
        return {a: frozenset(e.key for e in edits if not e.is_noop) for a, edits in groups.items()}


@dataclass(frozen=True)
class AnnotatedCorpus:
    sentences: tuple[AnnotatedSentence, ...] = ()
    # keeps the trailing blank line of the last block so writes are byte-identical
    final_blank_line: bool = field(default=True, compare=True)

    def __len__(self):
        return len(self.sentences)

    @property
    def sources(self) -> list[tuple[str, ...]]:
        return [s.source for s in self.sentences]

    def annotators(self) -> list[int]:
        return sorted({e.annotator for s in self.sentences for e in s.edits})


def _parse_edit(line: str, block: int, source_len: int) -> GoldEdit:
    fields = line[2:].split("|||")
    if len(fields) != 6:
        raise M2ParseError(block, f"expected 6 '|||' fields in {line!r}")
    span, etype, corr, required, comment, annotator = fields
    parts = span.split()
    if len(parts) != 2:
        raise M2ParseError(block, f"bad span {span!r}")
    try:
        start, end = int(parts[0]), int(parts[1])
        ann = int(annotator)
    except ValueError:
        raise M2ParseError(block, f"non-integer offset or annotator in {line!r}") from None
    if ann < 0:
        raise M2ParseError(block, f"negative annotator id {ann}")
    if (start, end) == (-1, -1):
        if etype != NOOP:
            raise M2ParseError(block, "-1 -1 span is reserved for noop edits")
    elif start < 0 or end < start:
        raise M2ParseError(block, f"invalid span {start} {end}")
    elif end > source_len:
        raise M2ParseError(block, f"span {start} {end} exceeds source length {source_len}")
    correction = () if corr in ("", NONE_FIELD) else tokenize(corr)
    return GoldEdit(start, end, etype, correction, ann, required, comment)


def parse_m2(text: str) -> AnnotatedCorpus:
    """Parse M2 text: an "S" line, then "A" lines, blocks separated by blank lines."""
    if text == "":
        return AnnotatedCorpus((), final_blank_line=False)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    final_blank = bool(lines) and lines[-1] == ""

    sentences = []
    source = None
    edits: list[GoldEdit] = []
    block = 0
    for line in lines:
        if line == "":
            if source is not None:
                sentences.append(AnnotatedSentence(source, tuple(edits)))
                source, edits = None, []
                block += 1
            continue
        if line.startswith("S ") or line == "S":
            if source is not None:
                raise M2ParseError(block, "missing blank line between blocks")
            source = tokenize(line[2:])
        elif line.startswith("A "):
            if source is None:
                raise M2ParseError(block, "'A' line without preceding 'S' line")
            edits.append(_parse_edit(line, block, len(source)))
        else:
            raise M2ParseError(block, f"unrecognized line {line!r}")
    if source is not None:
        sentences.append(AnnotatedSentence(source, tuple(edits)))

    corpus = AnnotatedCorpus(tuple(sentences), final_blank_line=final_blank)
    anns = corpus.annotators()
    if anns and anns != list(range(len(anns))):
        raise CorpusError(f"annotator ids must be contiguous from 0, got {anns}")
    return corpus


def write_m2(corpus: AnnotatedCorpus) -> str:
    if not corpus.sentences:
        return ""
    blocks = []
    for sent in corpus.sentences:
        lines = ["S " + " ".join(sent.source)]
        lines.extend(e.to_line() for e in sent.edits)
        blocks.append("\n".join(lines) + "\n")
    text = "\n".join(blocks)
    if corpus.final_blank_line:
        text += "\n"
    return text


def apply_edits(source, edits) -> tuple[str, ...]:
    """Apply non-overlapping (start, end, correction) edits to a token sequence."""
    out = list(source)
    for start, end, correction in sorted(edits, key=lambda e: (e[0], e[1]), reverse=True):
        if start < 0:
            continue
        out[start:end] = list(correction)
    return tuple(out)


def read_text(path) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()
