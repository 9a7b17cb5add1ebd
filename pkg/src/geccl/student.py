"""A small trainable corrector whose result depends on training order.

The model is a rulebook of weighted phrase edits (source phrase of 1-3 tokens
to target phrase of 0-3 tokens). Training walks the data online. Every
observed edit adds the stage learning rate to its rule. Every unchanged
occurrence of a known source phrase subtracts ``rho`` times that rate. The
rulebook is capped at ``capacity`` entries, and the lowest-weight rule is
evicted when it overflows. The learning rate decays with the stage index, so
data seen in early stages carries more weight than the same data seen later.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

MAX_PHRASE = 3


@dataclass(frozen=True)
class AlignOp:
    op: str  # "match", "sub", "del" or "ins"
    i: int  # source index consumed, or insertion point
    j: int  # target index produced, or deletion point
    src: str | None = None
    tgt: str | None = None


def align(source, target) -> list[AlignOp]:
    """Minimal Levenshtein script (unit costs).

    The backtrace prefers match, then substitution, then deletion, then insertion.
    """
    src, tgt = tuple(source), tuple(target)
    if not src:
        raise ValueError("source must be nonempty")
    n, m = len(src), len(tgt)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(
                d[i - 1][j - 1] + (src[i - 1] != tgt[j - 1]),
                d[i - 1][j] + 1,
                d[i][j - 1] + 1,
            )
    ops = []
    i, j = n, m
    while i or j:
        if i and j and src[i - 1] == tgt[j - 1] and d[i][j] == d[i - 1][j - 1]:
            ops.append(AlignOp("match", i - 1, j - 1, src[i - 1], tgt[j - 1]))
            i, j = i - 1, j - 1
        elif i and j and src[i - 1] != tgt[j - 1] and d[i][j] == d[i - 1][j - 1] + 1:
            ops.append(AlignOp("sub", i - 1, j - 1, src[i - 1], tgt[j - 1]))
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            ops.append(AlignOp("del", i - 1, j, src[i - 1], None))
            i -= 1
        else:
            ops.append(AlignOp("ins", i, j - 1, None, tgt[j - 1]))
            j -= 1
    ops.reverse()
    return ops


def _runs(ops):
    """Maximal runs of non-match ops as (src_start, src_end, tgt_start, tgt_end)."""
    runs = []
    k = 0
    while k < len(ops):
        if ops[k].op == "match":
            k += 1
            continue
        first = ops[k]
        i0, j0 = first.i, first.j
        i1, j1 = i0, j0
        while k < len(ops) and ops[k].op != "match":
            op = ops[k]
            if op.op in ("sub", "del"):
                i1 = op.i + 1
            if op.op in ("sub", "ins"):
                j1 = op.j + 1
            k += 1
        runs.append((i0, i1, j0, j1))
    return runs


def edit_runs(source, target) -> list[tuple[int, int, tuple[str, ...]]]:
    """Source-side edits (start, end, correction), one per maximal non-match run."""
    tgt = tuple(target)
    return [(i0, i1, tgt[j0:j1]) for i0, i1, j0, j1 in _runs(align(source, target))]


def _observations(src, tgt, ops):
    obs = []
    anchors = set()
    n = len(src)
    for i0, i1, j0, j1 in _runs(ops):
        s_span, t_span = src[i0:i1], tgt[j0:j1]
        if i0 == i1:
            # insertions have no source tokens; anchor them to a neighbour
            if i0 > 0:
                anchors.add(i0 - 1)
                base = ((src[i0 - 1],) + s_span, (src[i0 - 1],) + t_span)
                extra = [(base[0] + src[i1 : i1 + 1], base[1] + src[i1 : i1 + 1])] if i1 < n else []
            else:
                anchors.add(0)
                base = (s_span + src[:1], t_span + src[:1])
                extra = []
        else:
            base = (s_span, t_span)
            left = src[i0 - 1 : i0] if i0 > 0 else ()
            right = src[i1 : i1 + 1] if i1 < n else ()
            extra = [
                (left + s_span + right, left + t_span + right),
                (left + s_span, left + t_span),
                (s_span + right, t_span + right),
            ]
        if len(base[0]) > MAX_PHRASE or len(base[1]) > MAX_PHRASE:
            continue
        obs.append(base)
        for s, t in extra:
            if s != base[0] and len(s) <= MAX_PHRASE and len(t) <= MAX_PHRASE:
                obs.append((s, t))
                break
    return obs, anchors


def extract_rules(example) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Phrase-edit observations from one pair.

    Each maximal run of changed tokens gives a bare rule plus at most one
    variant with neighbouring context that still fits the 3-token cap.
    Insertions are anchored to the token on their left (right at sentence start).
    """
    src, tgt = tuple(example.source), tuple(example.target)
    if src == tgt:
        return []
    return _observations(src, tgt, align(src, tgt))[0]


@dataclass
class EditRule:
    source_phrase: tuple[str, ...]
    target_phrase: tuple[str, ...]
    weight: float = 0.0
    first_seen_stage: int = 0
    penalty: float = 0.0  # accumulated unchanged-evidence decrements
    born: int = 0

    def __post_init__(self):
        if not self.source_phrase:
            raise ValueError("source phrase must be nonempty")
        if self.source_phrase == self.target_phrase:
            raise ValueError("rule must change its source phrase")

    @property
    def normalized(self) -> float:
        denom = self.weight + self.penalty
        if denom <= 0:
            return 0.0
        return min(1.0, max(0.0, self.weight / denom))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    rho: float = 0.5
    threshold: float = 0.5
    capacity: int = 10000
    max_passes: int = 5
    epsilon: float = 0.001

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie strictly between 0 and 1")
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")

    def stage_lr(self, stage: int) -> float:
        return self.learning_rate / (1 + stage)


@dataclass
class StudentModel:
    config: TrainConfig = field(default_factory=TrainConfig)
    rules: dict = field(default_factory=dict)  # (source, target) -> EditRule
    stage_index: int = 0
    _born: int = 0
    _by_source: dict = field(default_factory=dict, repr=False)
    _best: dict | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.rules)

    def best_rules(self) -> dict:
        """Highest-weight rule per source phrase (ties: lexicographically first target)."""
        if self._best is None:
            best = {}
            for rule in self.rules.values():
                cur = best.get(rule.source_phrase)
                if cur is None or (rule.weight, cur.target_phrase) > (cur.weight, rule.target_phrase):
                    best[rule.source_phrase] = rule
            self._best = best
        return self._best

    # training internals

    def _add(self, src, tgt, amount, stage) -> int:
        key = (src, tgt)
        rule = self.rules.get(key)
        evicted = 0
        if rule is None:
            rule = EditRule(src, tgt, 0.0, stage, 0.0, self._born)
            self._born += 1
            self.rules[key] = rule
            self._by_source.setdefault(src, set()).add(key)
        rule.weight += amount
        if len(self.rules) > self.config.capacity:
            self._evict()
            evicted = 1
        self._best = None
        return evicted

    def _evict(self):
        # lowest weight goes; among ties the newest stage, then the newest rule
        victim = min(self.rules.values(), key=lambda r: (r.weight, -r.first_seen_stage, -r.born))
        key = (victim.source_phrase, victim.target_phrase)
        del self.rules[key]
        keys = self._by_source[victim.source_phrase]
        keys.discard(key)
        if not keys:
            del self._by_source[victim.source_phrase]

    def _penalize(self, src_phrase, amount):
        for key in self._by_source.get(src_phrase, ()):
            rule = self.rules[key]
            rule.weight -= amount
            rule.penalty += amount
        self._best = None

    def learn(self, example, lr: float) -> tuple[int, int]:
        """One online update; returns (observations, evictions)."""
        src, tgt = tuple(example.source), tuple(example.target)
        ops = align(src, tgt)
        obs, anchors = _observations(src, tgt, ops) if src != tgt else ([], set())
        evictions = 0
        for s, t in obs:
            evictions += self._add(s, t, lr, self.stage_index)
        unchanged = [False] * len(src)
        for op in ops:
            if op.op == "match" and op.i not in anchors:
                unchanged[op.i] = True
        amount = lr * self.config.rho
        if amount:
            for p in range(len(src)):
                for length in range(1, MAX_PHRASE + 1):
                    if p + length > len(src) or not unchanged[p + length - 1]:
                        break
                    if not unchanged[p]:
                        break
                    phrase = src[p : p + length]
                    if phrase in self._by_source:
                        self._penalize(phrase, amount)
        return len(obs), evictions

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "stage_index": self.stage_index,
            "rules": [
                {
                    "source": list(r.source_phrase),
                    "target": list(r.target_phrase),
                    "weight": r.weight,
                    "penalty": r.penalty,
                    "first_seen_stage": r.first_seen_stage,
                }
                for r in self.rules.values()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> StudentModel:
        model = cls(TrainConfig(**data["config"]), stage_index=data["stage_index"])
        for rec in data["rules"]:
            src, tgt = tuple(rec["source"]), tuple(rec["target"])
            rule = EditRule(src, tgt, rec["weight"], rec["first_seen_stage"], rec.get("penalty", 0.0), model._born)
            model._born += 1
            model.rules[(src, tgt)] = rule
            model._by_source.setdefault(src, set()).add((src, tgt))
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> StudentModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class StageMetrics:
    stage_index: int
    learning_rate: float
    passes: int = 0
    examples_seen: int = 0
    observations: int = 0
    evictions: int = 0
    rule_count: int = 0
    validation_f: list[float] = field(default_factory=list)


def correct(model: StudentModel, sentence, threshold: float | None = None):
    """Apply rules whose normalized weight reaches the threshold.

    Candidate matches are taken greedily by higher weight, then longer source
    phrase, then leftmost position, skipping any that overlap an accepted one.
    Returns the corrected tokens and the applied (start, end, replacement) edits.
    """
    tokens = tuple(sentence)
    tau = model.config.threshold if threshold is None else threshold
    best = model.best_rules()
    if not best:
        return tokens, []
    candidates = []
    for p in range(len(tokens)):
        for length in range(1, MAX_PHRASE + 1):
            if p + length > len(tokens):
                break
            rule = best.get(tokens[p : p + length])
            if rule is not None and rule.normalized >= tau:
                candidates.append((-rule.weight, -length, p, rule))
    candidates.sort(key=lambda c: c[:3])
    taken = [False] * len(tokens)
    applied = []
    for _, neg_len, p, rule in candidates:
        span = range(p, p - neg_len)
        if any(taken[k] for k in span):
            continue
        for k in span:
            taken[k] = True
        applied.append((p, p - neg_len, rule.target_phrase))
    applied.sort()
    out = list(tokens)
    for start, end, repl in reversed(applied):
        out[start:end] = list(repl)
    return tuple(out), applied


def validation_score(model: StudentModel, validation) -> float:
    from .evaluation import m2_score

    sources, gold = validation
    hyps = [correct(model, s)[0] for s in sources]
    return m2_score(sources, hyps, gold).f_half


def train_stage(model: StudentModel, dataset, config: TrainConfig | None = None, validation=None):
    """Train a copy of ``model`` on one curriculum stage.

    Passes repeat until validation F0.5 gains less than ``epsilon`` or
    ``max_passes`` is reached. Without validation data a single pass is made.
    The returned model's stage index is one higher than the input's.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("cannot train on an empty stage")
    config = config or model.config
    m = copy.deepcopy(model)
    m.config = config
    m._best = None
    lr = config.stage_lr(m.stage_index)
    metrics = StageMetrics(m.stage_index, lr)
    prev = None
    for _ in range(config.max_passes):
        for ex in dataset:
            n_obs, n_evict = m.learn(ex, lr)
            metrics.observations += n_obs
            metrics.evictions += n_evict
        metrics.passes += 1
        metrics.examples_seen += len(dataset)
        if validation is None:
            break
        cur = validation_score(m, validation)
        metrics.validation_f.append(cur)
        # convergence compares consecutive passes over this stage's data
        if prev is not None and cur - prev < config.epsilon:
            break
        prev = cur
    m.stage_index += 1
    metrics.rule_count = len(m.rules)
    if not all(math.isfinite(r.weight) for r in m.rules.values()):
        raise FloatingPointError("non-finite rule weight")
    return m, metrics
