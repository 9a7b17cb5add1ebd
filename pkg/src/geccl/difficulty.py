"""Difficulty scoring of changed training pairs.

A backend receives a rendered prompt (the source sentence only) and returns
free text; the first usable 1-10 integer in that text becomes the score, and
scores map onto three tiers: 1-3 easy, 4-7 medium, 8-10 hard.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.stats import rankdata

from .corpus import ParallelExample

logger = logging.getLogger(__name__)

PLACEHOLDER = "{sentence}"
ENDPOINT_ENV = "GECCL_LLM_ENDPOINT"
API_KEY_ENV = "GECCL_LLM_API_KEY"
FALLBACK_SCORE = 5


class ConfigError(ValueError):
    pass


class UnscorableResponse(ValueError):
    def __init__(self, response: str):
        super().__init__(f"no score in 1..10 found in response: {response[:80]!r}")
        self.response = response


class BackendError(RuntimeError):
    def __init__(self, message: str, example_id: int | None = None):
        super().__init__(message if example_id is None else f"example {example_id}: {message}")
        self.example_id = example_id


class Tier(enum.IntEnum):
    EASY = 0
    MEDIUM = 1
    HARD = 2

    def __str__(self):
        return self.name.capitalize()


@dataclass(frozen=True)
class DifficultyScore:
    example_id: int
    raw_response: str
    score: int
    backend: str
    flagged: bool = False

    @property
    def tier(self) -> Tier:
        return bucket(self.score)


def bucket(score: int) -> Tier:
    if isinstance(score, bool) or not isinstance(score, (int, np.integer)):
        raise ValueError(f"score must be an integer, got {score!r}")
    if not 1 <= score <= 10:
        raise ValueError(f"score {score} outside 1..10")
    if score <= 3:
        return Tier.EASY
    if score <= 7:
        return Tier.MEDIUM
    return Tier.HARD


# --- prompts -----------------------------------------------------------------

def default_template() -> str:
    return resources.files("geccl").joinpath("prompts/default.txt").read_text(encoding="utf-8")


def load_template(path=None) -> str:
    if path is None:
        return default_template()
    return Path(path).read_text(encoding="utf-8")


def template_version(template: str) -> str:
    return hashlib.sha256(template.encode("utf-8")).hexdigest()[:12]


def check_template(template: str) -> None:
    count = template.count(PLACEHOLDER)
    if count != 1:
        raise ConfigError(f"template must contain exactly one {PLACEHOLDER} placeholder, found {count}")


def render_prompt(template: str, example: ParallelExample) -> str:
    """Fill the template with the source sentence; the target is never shown."""
    check_template(template)
    return template.replace(PLACEHOLDER, example.source_text)


# --- response post-editing -----------------------------------------------------

# mentions of the rating scale itself ("1 to 10", "1-10", "out of 10", "/10")
_SCALE_RE = re.compile(
    r"(?<![\w.])(?:1\s*(?:to|-|–|through)\s*10|out\s+of\s+10|/\s*10)(?![\w]|\.\d)",
    re.IGNORECASE,
)
_INT_RE = re.compile(r"(?<![\w.])(\d+)(?![\w]|\.\d)")


def extract_score(response: str) -> int:
    """Return the first standalone integer in 1..10, ignoring scale mentions.

    The digit run is matched greedily so "10" wins over "1" at the same position.
    """
    text = _SCALE_RE.sub(lambda m: " " * len(m.group(0)), response)
    for m in _INT_RE.finditer(text):
        value = int(m.group(1))
        if 1 <= value <= 10:
            return value
    raise UnscorableResponse(response)


# --- backends ------------------------------------------------------------------

class ScoringBackend(Protocol):
    label: str

    def complete(self, prompt: str, example: ParallelExample) -> str: ...


class RemoteLLM:
    """POSTs ``{prompt_field: prompt}`` to an HTTP endpoint and reads ``response_field``."""

    label = "remote"

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        *,
        prompt_field: str = "prompt",
        response_field: str = "text",
        timeout: float = 60.0,
        session=None,
    ):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ConfigError(f"remote backend needs an endpoint (set {ENDPOINT_ENV})")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.prompt_field = prompt_field
        self.response_field = response_field
        self.timeout = timeout
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def complete(self, prompt: str, example: ParallelExample) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(
                self.endpoint,
                json={self.prompt_field: prompt},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            body = resp.json()
        except Exception as exc:
            raise BackendError(f"request failed: {exc}") from exc
        text = body.get(self.response_field) if isinstance(body, dict) else None
        if not isinstance(text, str) or not text:
            raise BackendError(f"response has no {self.response_field!r} text")
        return text


class Replay:
    """Canned responses keyed by source text (or by example id as a fallback)."""

    label = "replay"

    def __init__(self, by_source: dict[str, str] | None = None, by_id: dict[int, str] | None = None):
        self.by_source = dict(by_source or {})
        self.by_id = dict(by_id or {})

    @classmethod
    def from_file(cls, path) -> Replay:
        by_source, by_id = {}, {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "source" in rec:
                    by_source[rec["source"]] = rec["response"]
                elif "example_id" in rec:
                    by_id[int(rec["example_id"])] = rec["response"]
        return cls(by_source, by_id)

    def complete(self, prompt: str, example: ParallelExample) -> str:
        text = self.by_source.get(example.source_text)
        if text is None:
            text = self.by_id.get(example.id)
        if text is None:
            raise BackendError("no canned response", example.id)
        return text


TIER_BASE = {Tier.EASY: 2, Tier.MEDIUM: 4, Tier.HARD: 8}
TIER_CAP = {Tier.EASY: 3, Tier.MEDIUM: 7, Tier.HARD: 10}


def density_score(tier: Tier, n_edits: int) -> int:
    """Score for a sentence whose hardest edit falls in ``tier``: more edits, higher score."""
    return min(TIER_BASE[tier] + max(n_edits, 1) - 1, TIER_CAP[tier])


class Oracle:
    """Scores from gold edits: hardest operation type sets the tier, edit count the offset.

    Substitutions count as easy, insertions/deletions as medium, reorderings
    as hard. Sources without known gold edits fall back to aligning them
    against the example's target.
    """

    label = "oracle"

    def __init__(self, gold: dict[str, list] | None = None):
        self.gold = dict(gold or {})

    @classmethod
    def from_labels(cls, path) -> Oracle:
        gold = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    gold[rec["source"]] = [
                        (e["start"], e["end"], tuple(e["correction"])) for e in rec["edits"]
                    ]
        return cls(gold)

    def edits_for(self, example: ParallelExample):
        edits = self.gold.get(example.source_text)
        if edits is None:
            from .student import edit_runs

            edits = edit_runs(example.source, example.target)
        return edits

    def score(self, example: ParallelExample) -> int:
        from .evaluation import OpType, classify_op_level

        edits = self.edits_for(example)
        tier = Tier.EASY
        for start, end, correction in edits:
            op = classify_op_level((start, end, correction), example.source)
            if op is OpType.WORD_ORDER:
                tier = Tier.HARD
            elif op in (OpType.MISSING, OpType.UNNECESSARY):
                tier = max(tier, Tier.MEDIUM)
        return density_score(tier, len(edits))

    def complete(self, prompt: str, example: ParallelExample) -> str:
        n = len(self.edits_for(example))
        return (
            f"I would rate this sentence a {self.score(example)} out of 10 because "
            f"it contains {n} error{'s' if n != 1 else ''} to correct."
        )


# --- cache -----------------------------------------------------------------------

def fingerprint(source_text: str, backend: str, version: str) -> str:
    payload = "\x1f".join((backend, version, source_text))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ScoreCache:
    """Append-only JSON Lines cache keyed by source/backend/template fingerprint."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._records: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        rec = json.loads(line)
                        self._records[rec["fingerprint"]] = rec

    def __len__(self):
        return len(self._records)

    def __contains__(self, fp: str) -> bool:
        return fp in self._records

    def get(self, fp: str) -> dict | None:
        return self._records.get(fp)

    def put(self, record: dict) -> None:
        with self._lock:
            self._records[record["fingerprint"]] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


# --- batch scoring -------------------------------------------------------------

def _query(backend, prompt, example, retries, backoff) -> tuple[str, int | None]:
    """Ask the backend until it yields a parseable score or retries run out."""
    response = None
    for attempt in range(retries + 1):
        try:
            response = backend.complete(prompt, example)
        except BackendError as exc:
            if attempt == retries:
                raise BackendError(f"failed after {retries} retries: {exc}", example.id) from exc
            logger.warning("backend error on example %d (attempt %d): %s", example.id, attempt + 1, exc)
            if backoff:
                time.sleep(backoff * 2**attempt)
            continue
        try:
            return response, extract_score(response)
        except UnscorableResponse:
            if attempt == retries:
                return response, None
    return response or "", None


def score_batch(
    backend: ScoringBackend,
    examples,
    cache: ScoreCache | None = None,
    concurrency_limit: int = 1,
    *,
    template: str | None = None,
    retries: int = 3,
    backoff: float = 0.0,
    fallback: str = "medium",
) -> list[DifficultyScore]:
    """Score changed examples, consulting the cache first.

    Output order follows ``examples``. Unscorable responses get score 5 with
    ``flagged=True`` under the "medium" fallback, or are omitted under "drop".
    """
    if fallback not in ("medium", "drop"):
        raise ConfigError(f"unknown fallback policy {fallback!r}")
    examples = list(examples)
    for ex in examples:
        if ex.identical:
            raise ValueError(f"example {ex.id} is an identical pair and cannot be scored")
    template = default_template() if template is None else template
    check_template(template)
    version = template_version(template)
    cache = cache if cache is not None else ScoreCache()

    fps = [fingerprint(ex.source_text, backend.label, version) for ex in examples]
    todo: dict[str, ParallelExample] = {}
    for fp, ex in zip(fps, examples):
        if fp not in cache and fp not in todo:
            todo[fp] = ex

    def work(item):
        fp, ex = item
        return fp, ex, _query(backend, render_prompt(template, ex), ex, retries, backoff)

    with ThreadPoolExecutor(max_workers=max(1, concurrency_limit)) as pool:
        # map() yields in submission order, so cache appends are deterministic
        for fp, ex, (raw, score) in pool.map(work, todo.items()):
            cache.put(
                {
                    "fingerprint": fp,
                    "example_id": ex.id,
                    "backend": backend.label,
                    "score": score,
                    "raw_response": raw,
                }
            )

    out = []
    for fp, ex in zip(fps, examples):
        rec = cache.get(fp)
        if rec["score"] is None:
            if fallback == "drop":
                logger.warning("dropping unscorable example %d", ex.id)
                continue
            out.append(DifficultyScore(ex.id, rec["raw_response"], FALLBACK_SCORE, rec["backend"], True))
        else:
            out.append(DifficultyScore(ex.id, rec["raw_response"], int(rec["score"]), rec["backend"]))
    return out


def score_by_length(examples) -> list[DifficultyScore]:
    """Length-tercile baseline: shortest third 2, middle third 5, longest third 9.

    Returned in input order. Sizes that do not divide by three give the extra
    examples to the earlier tiers.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("score_by_length needs at least one example")
    n = len(examples)
    base, rem = divmod(n, 3)
    sizes = [base + (rem > 0), base + (rem > 1), base]
    order = sorted(examples, key=lambda ex: (len(ex.source), ex.id))
    by_id = {}
    pos = 0
    for value, size in zip((2, 5, 9), sizes):
        for ex in order[pos : pos + size]:
            by_id[ex.id] = value
        pos += size
    return [DifficultyScore(ex.id, "", by_id[ex.id], "length") for ex in examples]


def save_scores(scores, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in scores:
            f.write(json.dumps(asdict(s), ensure_ascii=False, sort_keys=True) + "\n")


def load_scores(path) -> list[DifficultyScore]:
    with open(path, encoding="utf-8") as f:
        return [DifficultyScore(**json.loads(line)) for line in f if line.strip()]


# --- agreement -------------------------------------------------------------------

@dataclass(frozen=True)
class AgreementReport:
    tier_agreement_rate: float
    rank_correlation: float
    n: int


def agreement(scores_a, scores_b) -> AgreementReport:
    """Tier agreement rate and Spearman correlation between two scorings of the same ids."""
    a = {s.example_id: s.score for s in scores_a}
    b = {s.example_id: s.score for s in scores_b}
    if set(a) != set(b):
        raise ValueError("score lists cover different example ids")
    if not a:
        raise ValueError("no scores to compare")
    ids = sorted(a)
    xa = np.array([a[i] for i in ids], dtype=float)
    xb = np.array([b[i] for i in ids], dtype=float)
    same = sum(bucket(a[i]) == bucket(b[i]) for i in ids)
    ra, rb = rankdata(xa), rankdata(xb)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = float(np.sqrt((ra * ra).sum() * (rb * rb).sum()))
    # constant scores carry no rank information
    rho = 0.0 if denom == 0.0 else float(np.clip((ra * rb).sum() / denom, -1.0, 1.0))
    return AgreementReport(same / len(ids), rho, len(ids))
