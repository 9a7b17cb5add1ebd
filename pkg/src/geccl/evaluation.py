"""M2-style maximal-matching evaluation.

For every sentence the hypothesis is aligned to the source with all minimal
Levenshtein alignments. Every alignment step is an edge of a lattice, and
runs of steps holding at most ``max_unchanged`` unchanged tokens are merged
into extra composite edges. For each annotator the path that matches the most
gold edits is chosen, with fewer proposed edits breaking ties. The annotator
with the best sentence-level F-beta is then kept (lower id wins ties).
"""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from scipy.special import betainc

from .corpus import AnnotatedCorpus, GoldEdit


@dataclass(frozen=True, order=True)
class HypEdit:
    start: int
    end: int
    correction: tuple[str, ...]

    @property
    def key(self) -> tuple[int, int, tuple[str, ...]]:
        return (self.start, self.end, self.correction)


class OpType(enum.Enum):
    REPLACEMENT = "R"
    MISSING = "M"
    UNNECESSARY = "U"
    WORD_ORDER = "WO"


OP_TYPES = tuple(OpType)


def _edit_key(edit) -> tuple[int, int, tuple[str, ...]]:
    if isinstance(edit, (HypEdit, GoldEdit)):
        return edit.key
    start, end, correction = edit
    return start, end, tuple(correction)


def classify_op_level(edit, source: Sequence[str]) -> OpType:
    """Coarse operation type of an edit against its source tokens.

    Insertion is Missing, deletion is Unnecessary, a permutation of the
    source span is WordOrder, anything else is Replacement.
    """
    start, end, correction = _edit_key(edit)
    if start == end:
        return OpType.MISSING
    if not correction:
        return OpType.UNNECESSARY
    span = tuple(source[start:end])
    if span != correction and Counter(span) == Counter(correction):
        return OpType.WORD_ORDER
    return OpType.REPLACEMENT


# --- scores ----------------------------------------------------------------------

def precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float]:
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    return p, r


def f_beta(tp: int, fp: int, fn: int, beta: float = 0.5) -> float:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    if beta <= 0:
        raise ValueError("beta must be positive")
    p, r = precision_recall(tp, fp, fn)
    b2 = beta * beta
    denom = b2 * p + r
    if denom == 0:
        return 0.0
    return (1 + b2) * p * r / denom


@dataclass(frozen=True)
class EvalResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return precision_recall(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return precision_recall(self.tp, self.fp, self.fn)[1]

    @property
    def f_half(self) -> float:
        return f_beta(self.tp, self.fp, self.fn, 0.5)

    def f(self, beta: float) -> float:
        return f_beta(self.tp, self.fp, self.fn, beta)

    def __add__(self, other: EvalResult) -> EvalResult:
        return EvalResult(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f_half": self.f_half,
        }


# --- edit lattice ------------------------------------------------------------------

def _distance_tables(src, hyp):
    n, m = len(src), len(hyp)
    fwd = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        fwd[i][0] = i
    for j in range(m + 1):
        fwd[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = fwd[i - 1][j - 1] + (src[i - 1] != hyp[j - 1])
            fwd[i][j] = min(diag, fwd[i - 1][j] + 1, fwd[i][j - 1] + 1)
    bwd = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n, -1, -1):
        bwd[i][m] = n - i
    for j in range(m, -1, -1):
        bwd[n][j] = m - j
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            diag = bwd[i + 1][j + 1] + (src[i] != hyp[j])
            bwd[i][j] = min(diag, bwd[i + 1][j] + 1, bwd[i][j + 1] + 1)
    return fwd, bwd


@dataclass
class EditLattice:
    """Vertices are alignment cells (i, j) on some minimal alignment path.

    ``edges`` maps a vertex to its successors; each successor carries the
    HypEdit it represents, or None when the step leaves the source unchanged.
    """

    source: tuple[str, ...]
    hypothesis: tuple[str, ...]
    vertices: list[tuple[int, int]] = field(default_factory=list)
    edges: dict[tuple[int, int], list[tuple[tuple[int, int], HypEdit | None]]] = field(
        default_factory=dict
    )

    @property
    def start(self) -> tuple[int, int]:
        return (0, 0)

    @property
    def end(self) -> tuple[int, int]:
        return (len(self.source), len(self.hypothesis))

    def paths(self) -> Iterable[tuple[HypEdit, ...]]:
        """Yield the edit sequence of every start-to-end path (exponential)."""

        def walk(v, acc):
            if v == self.end:
                yield tuple(acc)
                return
            for w, edit in self.edges.get(v, ()):
                if edit is not None:
                    acc.append(edit)
                yield from walk(w, acc)
                if edit is not None:
                    acc.pop()

        yield from walk(self.start, [])

    def decompositions(self) -> list[tuple[HypEdit, ...]]:
        """Distinct edit sequences over all paths, sorted."""
        return sorted(set(self.paths()))


def build_lattice(source, hypothesis, max_unchanged: int = 2) -> EditLattice:
    src, hyp = tuple(source), tuple(hypothesis)
    fwd, bwd = _distance_tables(src, hyp)
    n, m = len(src), len(hyp)
    total = fwd[n][m]

    atomic: dict[tuple[int, int], list[tuple[tuple[int, int], int]]] = {}
    vertices = []
    for i in range(n + 1):
        for j in range(m + 1):
            if fwd[i][j] + bwd[i][j] != total:
                continue
            vertices.append((i, j))
            out = []
            base = fwd[i][j]
            if i < n and j < m:
                if src[i] == hyp[j]:
                    if base + bwd[i + 1][j + 1] == total:
                        out.append(((i + 1, j + 1), 1))
                elif base + 1 + bwd[i + 1][j + 1] == total:
                    out.append(((i + 1, j + 1), 0))
            if i < n and base + 1 + bwd[i + 1][j] == total:
                out.append(((i + 1, j), 0))
            if j < m and base + 1 + bwd[i][j + 1] == total:
                out.append(((i, j + 1), 0))
            atomic[(i, j)] = out  # (successor, unchanged tokens on the step)

    vertices.sort(key=lambda v: (v[0] + v[1], v[0]))
    order = {v: k for k, v in enumerate(vertices)}
    edges = {}
    for u in vertices:
        # Single steps are always edges. Composite edges start and end with a
        # changed step and hold at most max_unchanged unchanged tokens.
        targets = {w for w, _ in atomic[u]}
        reach = {w: 0 for w, unchanged in atomic[u] if not unchanged}
        for v in vertices[order[u] + 1 :]:
            if v not in reach:
                continue
            for w, unchanged in atomic[v]:
                cost = reach[v] + unchanged
                if cost > max_unchanged:
                    continue
                if cost < reach.get(w, math.inf):
                    reach[w] = cost
                if not unchanged:
                    targets.add(w)
        out = []
        for w in sorted(targets, key=lambda v: order[v]):
            s_span = src[u[0] : w[0]]
            h_span = hyp[u[1] : w[1]]
            edit = None if s_span == h_span else HypEdit(u[0], w[0], h_span)
            out.append((w, edit))
        edges[u] = out
    return EditLattice(src, hyp, vertices, edges)


def hypothesis_edits(source, hypothesis, max_unchanged: int = 2) -> list[tuple[HypEdit, ...]]:
    """All distinct edit decompositions of ``source -> hypothesis`` reachable in the lattice."""
    if not source:
        raise ValueError("source must be nonempty")
    return build_lattice(source, hypothesis, max_unchanged).decompositions()


def _count(edits: Sequence[HypEdit], gold: frozenset) -> tuple[int, int, int]:
    """(tp, fp, fn) for one decomposition; a repeated edit is credited once."""
    keys = [e.key for e in edits]
    tp = len(set(keys) & gold)
    return tp, len(keys) - tp, len(gold) - tp


def best_decomposition(lattice: EditLattice, gold: frozenset) -> tuple[HypEdit, ...]:
    """Path maximizing matched gold edits, then minimizing proposed edits.

    Runs a DAG dynamic program. Consecutive insertions at one source position
    are the only way a path can repeat an edit, so the state carries the
    insertions already made at the current position.
    """
    start = (lattice.start, frozenset())
    best: dict = {start: ((0, 0), None, None)}  # state -> (score, prev state, edit)
    pending = {lattice.start: [start]}
    end_states = []
    for v in lattice.vertices:
        states = sorted(pending.pop(v, ()), key=lambda s: sorted(s[1]))
        for state in states:
            score = best[state][0]
            if v == lattice.end:
                end_states.append(state)
                continue
            for w, edit in lattice.edges[v]:
                tp_gain = 0
                n_gain = 0
                ins = frozenset()
                if edit is not None:
                    n_gain = 1
                    if edit.start == edit.end:
                        ins = state[1] if w[0] == v[0] else frozenset()
                        if edit.key not in ins and edit.key in gold:
                            tp_gain = 1
                        ins = ins | {edit.key}
                    elif edit.key in gold:
                        tp_gain = 1
                nxt = (w, ins)
                cand = (score[0] + tp_gain, score[1] - n_gain)
                if nxt not in best:
                    best[nxt] = (cand, state, edit)
                    pending.setdefault(w, []).append(nxt)
                elif cand > best[nxt][0]:
                    best[nxt] = (cand, state, edit)
    final = max(end_states, key=lambda s: best[s][0])
    edits = []
    state = final
    while state != start:
        _, prev, edit = best[state]
        if edit is not None:
            edits.append(edit)
        state = prev
    return tuple(reversed(edits))


@dataclass(frozen=True)
class SentenceScore:
    annotator: int
    edits: tuple[HypEdit, ...]
    gold: frozenset

    @property
    def matched(self) -> list:
        seen, out = set(), []
        for e in self.edits:
            if e.key in self.gold and e.key not in seen:
                seen.add(e.key)
                out.append(e.key)
        return out

    @property
    def spurious(self) -> list:
        """Proposed edits not credited as true positives (repeats included)."""
        seen, out = set(), []
        for e in self.edits:
            if e.key in self.gold and e.key not in seen:
                seen.add(e.key)
            else:
                out.append(e.key)
        return out

    @property
    def missed(self) -> list:
        hit = {e.key for e in self.edits}
        return sorted(k for k in self.gold if k not in hit)

    @property
    def result(self) -> EvalResult:
        return EvalResult(*_count(self.edits, self.gold))


def score_sentence(source, hypothesis, gold_sets: dict[int, frozenset], beta=0.5, max_unchanged=2):
    lattice = build_lattice(source, hypothesis, max_unchanged)
    chosen = None
    best_f = -1.0
    for ann in sorted(gold_sets):
        gold = gold_sets[ann]
        edits = best_decomposition(lattice, gold)
        f = f_beta(*_count(edits, gold), beta)
        if f > best_f:
            best_f = f
            chosen = SentenceScore(ann, edits, gold)
    return chosen


def _check_aligned(sources, hypotheses, gold: AnnotatedCorpus):
    sources = [tuple(s) for s in sources]
    hypotheses = [tuple(h) for h in hypotheses]
    if not (len(sources) == len(hypotheses) == len(gold.sentences)):
        raise ValueError(
            f"length mismatch: {len(sources)} sources, {len(hypotheses)} hypotheses, "
            f"{len(gold.sentences)} gold sentences"
        )
    for k, (src, sent) in enumerate(zip(sources, gold.sentences)):
        if src != sent.source:
            raise ValueError(f"sentence {k}: source does not match gold source")
    return sources, hypotheses


def score_sentences(sources, hypotheses, gold: AnnotatedCorpus, beta=0.5, max_unchanged=2):
    sources, hypotheses = _check_aligned(sources, hypotheses, gold)
    return [
        score_sentence(src, hyp, sent.gold_sets(), beta, max_unchanged)
        for src, hyp, sent in zip(sources, hypotheses, gold.sentences)
    ]


def m2_score(sources, hypotheses, gold: AnnotatedCorpus, beta: float = 0.5, max_unchanged: int = 2) -> EvalResult:
    total = EvalResult()
    for s in score_sentences(sources, hypotheses, gold, beta, max_unchanged):
        total = total + s.result
    return total


def sentence_f_scores(sources, hypotheses, gold: AnnotatedCorpus, beta=0.5, max_unchanged=2) -> list[float]:
    return [s.result.f(beta) for s in score_sentences(sources, hypotheses, gold, beta, max_unchanged)]


def breakdown_from_scores(sources, scores: Sequence[SentenceScore]) -> dict[OpType, EvalResult]:
    counts = {t: [0, 0, 0] for t in OP_TYPES}
    for src, s in zip(sources, scores):
        for key in s.matched:
            counts[classify_op_level(key, src)][0] += 1
        for key in s.spurious:
            counts[classify_op_level(key, src)][1] += 1
        for key in s.missed:
            counts[classify_op_level(key, src)][2] += 1
    return {t: EvalResult(*c) for t, c in counts.items()}


def breakdown(sources, hypotheses, gold: AnnotatedCorpus, beta=0.5, max_unchanged=2) -> dict[OpType, EvalResult]:
    """Per-operation-type counts; rows sum to the ``m2_score`` totals."""
    scores = score_sentences(sources, hypotheses, gold, beta, max_unchanged)
    return breakdown_from_scores([tuple(s) for s in sources], scores)


# --- significance ------------------------------------------------------------------

def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Two-sided paired t-test p-value.

    With zero variance in the differences the statistic is undefined; p is
    1.0 when the mean difference is 0 and 0.0 otherwise.
    """
    if len(scores_a) != len(scores_b):
        raise ValueError("paired samples must have equal length")
    n = len(scores_a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    diffs = [float(a) - float(b) for a, b in zip(scores_a, scores_b)]
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / math.sqrt(var / n)
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return min(1.0, max(0.0, p))


# --- stage reports -----------------------------------------------------------------

@dataclass(frozen=True)
class StageEntry:
    name: str
    result: EvalResult
    by_type: dict[OpType, EvalResult]


@dataclass(frozen=True)
class StageReport:
    stages: tuple[StageEntry, ...]
    significance: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "stages": [
                {
                    "name": st.name,
                    **st.result.to_dict(),
                    "by_type": {t.value: st.by_type[t].to_dict() for t in OP_TYPES},
                }
                for st in self.stages
            ]
        }
        if self.significance is not None:
            out["significance"] = dict(self.significance)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> StageReport:
        stages = []
        for st in data["stages"]:
            by_type = {
                OpType(k): EvalResult(v["tp"], v["fp"], v["fn"]) for k, v in st["by_type"].items()
            }
            stages.append(StageEntry(st["name"], EvalResult(st["tp"], st["fp"], st["fn"]), by_type))
        return cls(tuple(stages), data.get("significance"))

    def render(self) -> str:
        rows = [("stage", "TP", "FP", "FN", "P", "R", "F0.5")]
        for st in self.stages:
            r = st.result
            rows.append(
                (st.name, str(r.tp), str(r.fp), str(r.fn), f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.f_half:.4f}")
            )
        parts = [_table(rows)]
        for st in self.stages:
            sub = [("type", "TP", "FP", "FN", "P", "R", "F0.5")]
            for t in OP_TYPES:
                r = st.by_type[t]
                sub.append(
                    (t.value, str(r.tp), str(r.fp), str(r.fn), f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.f_half:.4f}")
                )
            parts.append(f"[{st.name}] operation-level\n" + _table(sub))
        if self.significance is not None:
            parts.append(f"paired t-test vs {self.significance.get('vs')}: p = {self.significance.get('p_value'):.4g}")
        return "\n\n".join(parts) + "\n"


def _table(rows) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def stage_report(names, results, breakdowns, significance=None) -> StageReport:
    if not names:
        raise ValueError("a report needs at least one stage")
    if not (len(names) == len(results) == len(breakdowns)):
        raise ValueError("names, results and breakdowns must have equal length")
    stages = tuple(StageEntry(n, r, dict(b)) for n, r, b in zip(names, results, breakdowns))
    return StageReport(stages, significance)
