"""Desk-scale synthetic GEC corpus with planted, labelled errors.

Correct sentences come from a small template grammar. Errors are planted by
class: easy errors are single-token substitutions (agreement, spelling),
medium errors insert or delete a function word, and hard errors reorder 2-3
adjacent tokens. Every pair records its gold edits and the difficulty score
implied by its hardest planted class and its error count.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import AnnotatedCorpus, AnnotatedSentence, GoldEdit, apply_edits, write_m2
from .difficulty import Tier, density_score

SINGULAR = ["He", "She", "Tom", "Anna", "My brother", "The teacher", "Our neighbour", "The girl"]
PLURAL = ["They", "We", "My parents", "The students", "Our friends", "The children"]

# (singular form, plural form, object phrases); objects without an article
# are "bare" and may follow an adverb rotation
VERBS = [
    ("goes", "go", ["to school", "to the park", "to the market", "home"]),
    ("likes", "like", ["the new book", "the big black dog", "football", "music"]),
    ("plays", "play", ["football", "the piano", "tennis", "chess"]),
    ("reads", "read", ["the newspaper", "a long story", "books", "the old letters"]),
    ("watches", "watch", ["the news", "a funny film", "television", "the small birds"]),
    ("has", "have", ["a big black dog", "breakfast", "a new car", "lunch"]),
    ("visits", "visit", ["the museum", "the old castle", "friends", "a small village"]),
    ("cooks", "cook", ["dinner", "a nice meal", "rice", "the soup"]),
]
BARE_OBJECTS = {obj for _, _, objs in VERBS for obj in objs if " " not in obj}
ADVERBS = ["always", "often", "usually", "never", "sometimes"]
ENDINGS = ["every day", "on Sunday", "in the morning", "after dinner", "at the weekend", "with friends", ""]

MISSPELLINGS = {
    "school": "scool",
    "friends": "freinds",
    "morning": "mornig",
    "dinner": "diner",
    "market": "markett",
    "newspaper": "newspapper",
    "museum": "musuem",
    "weekend": "weekand",
    "village": "vilage",
    "music": "musik",
    "television": "televison",
    "breakfast": "brekfast",
    "letters": "leters",
    "children": "childern",
}
FUNCTION_WORDS = {"the", "to", "a", "in", "on", "at"}
# extra words that make a sentence wrong when inserted before the key token
UNNECESSARY = {
    "home": "to",
    "football": "the",
    "breakfast": "a",
    "lunch": "a",
    "tennis": "the",
    "chess": "the",
    "music": "the",
    "dinner": "a",
    "television": "the",
}
ADJ_PAIRS = [("big", "black"), ("new", "red"), ("small", "old")]

ETYPES = {"sub": "R:SUB", "missing": "M:FUNC", "unnecessary": "U:FUNC", "reorder": "W"}
CLASS_OF = {"sub": Tier.EASY, "missing": Tier.MEDIUM, "unnecessary": Tier.MEDIUM, "reorder": Tier.HARD}
MAX_ERRORS = {Tier.EASY: 2, Tier.MEDIUM: 4, Tier.HARD: 3}


@dataclass(frozen=True)
class SyntheticSpec:
    n_pairs: int = 2000
    identity_rate: float = 0.4
    tier_weights: tuple[float, float, float] = (0.38, 0.35, 0.27)
    n_dev: int = 300
    n_test: int = 500
    eval_identity_rate: float = 0.2
    seed: int = 7

    def __post_init__(self):
        if not 0 <= self.identity_rate <= 1 or not 0 <= self.eval_identity_rate <= 1:
            raise ValueError("rates must lie in [0, 1]")
        if self.n_pairs < 0 or self.n_dev < 0 or self.n_test < 0:
            raise ValueError("sizes must be non-negative")
        if len(self.tier_weights) != 3 or min(self.tier_weights) < 0 or sum(self.tier_weights) <= 0:
            raise ValueError("tier_weights must be three non-negative numbers with a positive sum")


@dataclass(frozen=True)
class PlantedPair:
    source: tuple[str, ...]
    target: tuple[str, ...]
    tier: Tier | None  # None for identical pairs
    score: int | None
    edits: tuple[tuple[int, int, tuple[str, ...], str], ...]  # (start, end, correction, kind)

    @property
    def identical(self) -> bool:
        return self.source == self.target


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    train: list[PlantedPair] = field(default_factory=list)
    dev: list[PlantedPair] = field(default_factory=list)
    test: list[PlantedPair] = field(default_factory=list)

    def tsv(self) -> str:
        return "".join(f"{' '.join(p.source)}\t{' '.join(p.target)}\n" for p in self.train)

    def labels_jsonl(self) -> str:
        lines = []
        for k, p in enumerate(self.train):
            rec = {
                "id": k,
                "source": " ".join(p.source),
                "target": " ".join(p.target),
                "identical": p.identical,
                "tier": None if p.tier is None else p.tier.name.lower(),
                "score": p.score,
                "edits": [
                    {"start": s, "end": e, "correction": list(c), "kind": kind} for s, e, c, kind in p.edits
                ],
            }
            lines.append(json.dumps(rec, ensure_ascii=False) + "\n")
        return "".join(lines)

    @staticmethod
    def gold(pairs) -> AnnotatedCorpus:
        sents = []
        for p in pairs:
            if p.edits:
                edits = tuple(GoldEdit(s, e, ETYPES[kind], c, 0) for s, e, c, kind in p.edits)
            else:
                edits = (GoldEdit(-1, -1, "noop", (), 0),)
            sents.append(AnnotatedSentence(p.source, edits))
        return AnnotatedCorpus(tuple(sents), final_blank_line=True)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "train.tsv",
            "labels": out / "labels.jsonl",
            "gold_dev": out / "dev.m2",
            "gold_test": out / "test.m2",
        }
        paths["corpus"].write_text(self.tsv(), encoding="utf-8")
        paths["labels"].write_text(self.labels_jsonl(), encoding="utf-8")
        paths["gold_dev"].write_text(write_m2(self.gold(self.dev)), encoding="utf-8")
        paths["gold_test"].write_text(write_m2(self.gold(self.test)), encoding="utf-8")
        return paths


def base_sentence(rng: random.Random) -> list[str]:
    plural = rng.random() < 0.45
    subject = rng.choice(PLURAL if plural else SINGULAR).split()
    sing, plur, objects = rng.choice(VERBS)
    verb = plur if plural else sing
    obj = rng.choice(objects).split()
    words = list(subject)
    if rng.random() < 0.4:
        words.append(rng.choice(ADVERBS))
    words.append(verb)
    words.extend(obj)
    ending = rng.choice(ENDINGS)
    if ending:
        words.extend(ending.split())
    words.append(".")
    return words


# A site is (start, end, replacement) on the correct sentence: the source
# shows `replacement` where the target has tokens[start:end].

def _sub_sites(tokens):
    sites = []
    verb_forms = {s: p for s, p, _ in VERBS}
    verb_forms.update({p: s for s, p, _ in VERBS})
    for i, tok in enumerate(tokens):
        if tok in MISSPELLINGS:
            sites.append((i, i + 1, (MISSPELLINGS[tok],)))
        elif tok in verb_forms and i > 0:
            sites.append((i, i + 1, (verb_forms[tok],)))
    return sites


def _missing_sites(tokens):
    return [(i, i + 1, ()) for i, tok in enumerate(tokens) if tok in FUNCTION_WORDS and i > 0]


def _unnecessary_sites(tokens):
    sites = []
    for i, tok in enumerate(tokens):
        word = UNNECESSARY.get(tok)
        if word and i > 0 and tokens[i - 1] not in FUNCTION_WORDS:
            sites.append((i, i, (word,)))
    return sites


def _reorder_sites(tokens):
    sites = []
    verbs = {f for s, p, _ in VERBS for f in (s, p)}
    for i in range(len(tokens) - 1):
        a, b = tokens[i], tokens[i + 1]
        if a in ADVERBS and b in verbs:
            sites.append((i, i + 2, (b, a)))
            # adverb after a one-word object: "always plays chess" -> "plays chess always"
            if i + 2 < len(tokens) and tokens[i + 2] in BARE_OBJECTS:
                sites.append((i, i + 3, (b, tokens[i + 2], a)))
        if (a, b) in ADJ_PAIRS:
            sites.append((i, i + 2, (b, a)))
    return sites


SITE_FINDERS = {
    "sub": _sub_sites,
    "missing": _missing_sites,
    "unnecessary": _unnecessary_sites,
    "reorder": _reorder_sites,
}
KINDS_BY_TIER = {Tier.EASY: ["sub"], Tier.MEDIUM: ["missing", "unnecessary"], Tier.HARD: ["reorder"]}


def _separated(chosen, site) -> bool:
    # at least one untouched token between any two planted errors
    s, e, _ = site
    for cs, ce, _ in chosen:
        if not (e < cs or ce < s):
            return False
    return True


def plant(tokens, tier: Tier, rng: random.Random):
    """Plant errors of ``tier`` (plus possibly easier ones) into a correct sentence.

    Returns None when the sentence offers no site for the requested class.
    """
    n_errors = rng.randint(1, MAX_ERRORS[tier])
    first_kind = rng.choice(KINDS_BY_TIER[tier])
    first_sites = SITE_FINDERS[first_kind](tokens)
    if not first_sites:
        return None
    chosen = [rng.choice(first_sites) + (first_kind,)]
    easier = [t for t in Tier if t <= tier]
    for _ in range(n_errors - 1):
        kind = rng.choice(KINDS_BY_TIER[rng.choice(easier)])
        options = [s for s in SITE_FINDERS[kind](tokens) if _separated([c[:3] for c in chosen], s)]
        if options:
            chosen.append(rng.choice(options) + (kind,))
    chosen.sort(key=lambda c: (c[0], c[1]))

    source = []
    edits = []
    pos = 0
    for start, end, repl, kind in chosen:
        source.extend(tokens[pos:start])
        s0 = len(source)
        source.extend(repl)
        edits.append((s0, s0 + len(repl), tuple(tokens[start:end]), kind))
        pos = end
    source.extend(tokens[pos:])
    source = tuple(source)
    if not source or source == tuple(tokens):
        return None
    hardest = max(CLASS_OF[kind] for *_, kind in chosen)
    return PlantedPair(source, tuple(tokens), hardest, density_score(hardest, len(chosen)), tuple(edits))


def _draw_pairs(n: int, identity_rate: float, weights, rng: random.Random) -> list[PlantedPair]:
    n_identical = round(n * identity_rate)
    flags = [True] * n_identical + [False] * (n - n_identical)
    rng.shuffle(flags)
    pairs = []
    for is_identical in flags:
        if is_identical:
            t = tuple(base_sentence(rng))
            pairs.append(PlantedPair(t, t, None, None, ()))
            continue
        tier = rng.choices(list(Tier), weights=weights)[0]
        while True:
            pair = plant(base_sentence(rng), tier, rng)
            if pair is not None:
                pairs.append(pair)
                break
    return pairs


def gen_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Deterministic under ``spec.seed``; train, dev and test use separate streams."""
    streams = {name: random.Random(f"{spec.seed}:{name}") for name in ("train", "dev", "test")}
    corpus = SyntheticCorpus(spec)
    corpus.train = _draw_pairs(spec.n_pairs, spec.identity_rate, spec.tier_weights, streams["train"])
    corpus.dev = _draw_pairs(spec.n_dev, spec.eval_identity_rate, spec.tier_weights, streams["dev"])
    corpus.test = _draw_pairs(spec.n_test, spec.eval_identity_rate, spec.tier_weights, streams["test"])
    for p in corpus.train + corpus.dev + corpus.test:
        if apply_edits(p.source, [e[:3] for e in p.edits]) != p.target:
            raise RuntimeError(f"planted edits do not reproduce target for {p.source}")
    return corpus
