"""Stage plans over difficulty tiers.

Cumulative strategies add one tier per stage and keep everything seen so far
(E, E+M, E+M+H, or the reverse order starting from hard). The baselines train
once on everything (plain) or once on a weighted mix (3x easy, 2x medium,
1x hard by default).
"""

from __future__ import annotations

import enum
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ParallelExample
from .difficulty import DifficultyScore, Tier


class Strategy(str, enum.Enum):
    EASY_CUMULATIVE = "easy"
    HARD_CUMULATIVE = "hard"
    MIXED_REPLAY = "mixed"
    PLAIN = "plain"


class IdenticalPolicy(str, enum.Enum):
    EXCLUDE = "exclude"
    ALL_STAGES = "all_stages"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class TieredCorpus:
    easy: tuple[ParallelExample, ...] = ()
    medium: tuple[ParallelExample, ...] = ()
    hard: tuple[ParallelExample, ...] = ()
    identical: tuple[ParallelExample, ...] = ()

    def ids(self) -> dict[str, list[int]]:
        return {
            "easy": [ex.id for ex in self.easy],
            "medium": [ex.id for ex in self.medium],
            "hard": [ex.id for ex in self.hard],
            "identical": [ex.id for ex in self.identical],
        }

    def examples(self) -> dict[int, ParallelExample]:
        return {ex.id: ex for ex in self.easy + self.medium + self.hard + self.identical}

    @classmethod
    def from_scores(cls, changed, identical, scores) -> TieredCorpus:
        """Split scored changed examples by tier; unscored examples are left out."""
        tier_of = {s.example_id: s.tier for s in scores}
        groups = {Tier.EASY: [], Tier.MEDIUM: [], Tier.HARD: []}
        for ex in changed:
            if ex.id in tier_of:
                groups[tier_of[ex.id]].append(ex)
        return cls(
            tuple(groups[Tier.EASY]),
            tuple(groups[Tier.MEDIUM]),
            tuple(groups[Tier.HARD]),
            tuple(identical),
        )


@dataclass(frozen=True)
class StageSpec:
    name: str
    members: tuple[int, ...]
    shuffle_seed: int


@dataclass(frozen=True)
class CurriculumPlan:
    strategy: Strategy
    stages: tuple[StageSpec, ...]
    identical_policy: IdenticalPolicy
    seed: int
    tiers: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "identical_policy": self.identical_policy.value,
            "seed": self.seed,
            "stages": [
                {"name": st.name, "shuffle_seed": st.shuffle_seed, "ids": list(st.members)}
                for st in self.stages
            ],
            "tiers": {k: list(v) for k, v in self.tiers.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> CurriculumPlan:
        return cls(
            Strategy(data["strategy"]),
            tuple(StageSpec(st["name"], tuple(st["ids"]), st.get("shuffle_seed", 0)) for st in data["stages"]),
            IdenticalPolicy(data["identical_policy"]),
            data["seed"],
            {k: tuple(v) for k, v in data.get("tiers", {}).items()},
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> CurriculumPlan:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def stage_seed(seed: int, k: int) -> int:
    return seed * 1_000_003 + k


def _shuffled(ids, seed) -> tuple[int, ...]:
    out = list(ids)
    random.Random(seed).shuffle(out)
    return tuple(out)


_ORDER = {
    Strategy.EASY_CUMULATIVE: (("easy", "E"), ("medium", "M"), ("hard", "H")),
    Strategy.HARD_CUMULATIVE: (("hard", "H"), ("medium", "M"), ("easy", "E")),
}


def mixed_replay(tiers: TieredCorpus, multipliers=(3, 2, 1), seed: int = 0) -> StageSpec:
    """One stage holding each easy id 3 times, medium 2 times, hard once (by default)."""
    if len(multipliers) != 3 or any(int(k) != k or k < 1 for k in multipliers):
        raise PlanError(f"multipliers must be three positive integers, got {multipliers}")
    ids = tiers.ids()
    members = []
    for name, k in zip(("easy", "medium", "hard"), multipliers):
        members.extend(ids[name] * int(k))
    label = "+".join(f"{k}{t}" for k, t in zip(multipliers, "EMH"))
    s = stage_seed(seed, 0)
    return StageSpec(label, _shuffled(members, s), s)


def plan(
    strategy,
    tiers: TieredCorpus,
    identical_policy=IdenticalPolicy.ALL_STAGES,
    seed: int = 0,
    multipliers=(3, 2, 1),
) -> CurriculumPlan:
    strategy = Strategy(strategy)
    identical_policy = IdenticalPolicy(identical_policy)
    ids = tiers.ids()
    extra = ids["identical"] if identical_policy is IdenticalPolicy.ALL_STAGES else []
    tier_ids = {k: tuple(v) for k, v in ids.items()}

    stages = []
    if strategy in _ORDER:
        members: list[int] = []
        label = ""
        for k, (tier, letter) in enumerate(_ORDER[strategy]):
            if k == 0 and not ids[tier]:
                raise PlanError(f"{strategy.value} curriculum needs a nonempty {tier} tier")
            members = members + ids[tier]
            label += letter
            s = stage_seed(seed, k)
            stages.append(StageSpec(label, _shuffled(members + extra, s), s))
    elif strategy is Strategy.PLAIN:
        s = stage_seed(seed, 0)
        all_ids = ids["easy"] + ids["medium"] + ids["hard"] + extra
        stages.append(StageSpec("All", _shuffled(all_ids, s), s))
    else:
        spec = mixed_replay(tiers, multipliers, seed)
        if extra:
            spec = StageSpec(spec.name, _shuffled(list(spec.members) + extra, spec.shuffle_seed), spec.shuffle_seed)
        stages.append(spec)
    return CurriculumPlan(strategy, tuple(stages), identical_policy, seed, tier_ids)


def stage_dataset(plan: CurriculumPlan, k: int, corpus) -> list[ParallelExample]:
    """Resolve stage ``k`` ids to examples in the stage's shuffled order."""
    if not 0 <= k < len(plan.stages):
        raise IndexError(f"stage {k} out of range for a {len(plan.stages)}-stage plan")
    if isinstance(corpus, dict):
        lookup = corpus
    elif isinstance(corpus, TieredCorpus):
        lookup = corpus.examples()
    else:
        lookup = {ex.id: ex for ex in corpus}
    out = []
    for i in plan.stages[k].members:
        if i not in lookup:
            raise KeyError(f"stage {plan.stages[k].name} refers to unknown example id {i}")
        out.append(lookup[i])
    return out


def validate_plan(plan: CurriculumPlan) -> list[str]:
    """Invariant violations of a plan, as messages; empty when the plan is valid."""
    violations = []
    tiers = {k: set(v) for k, v in plan.tiers.items()}
    names = ("easy", "medium", "hard", "identical")
    for a_idx, a in enumerate(names):
        for b in names[a_idx + 1 :]:
            shared = tiers.get(a, set()) & tiers.get(b, set())
            if shared:
                violations.append(f"tier overlap: {a} and {b} share ids {sorted(shared)}")

    extra = tiers.get("identical", set()) if plan.identical_policy is IdenticalPolicy.ALL_STAGES else set()
    sets = [set(st.members) for st in plan.stages]

    if plan.strategy in _ORDER:
        if len(plan.stages) != 3:
            violations.append(f"{plan.strategy.value} plan must have 3 stages, has {len(plan.stages)}")
        for k in range(1, len(sets)):
            if not sets[k] >= sets[k - 1]:
                violations.append(f"superset chain broken at stage {k + 1}")
        expected = set(extra)
        for k, (tier, _) in enumerate(_ORDER[plan.strategy][: len(sets)]):
            expected |= tiers.get(tier, set())
            if sets[k] != expected:
                violations.append(f"stage {k + 1} composition differs from the cumulative tier union")
        for k, st in enumerate(plan.stages):
            dup = [i for i, c in Counter(st.members).items() if c > 1]
            if dup:
                violations.append(f"stage {k + 1} repeats ids {sorted(dup)[:5]}")
    else:
        if len(plan.stages) != 1:
            violations.append(f"{plan.strategy.value} plan must have 1 stage, has {len(plan.stages)}")
        elif plan.strategy is Strategy.PLAIN:
            expected = tiers.get("easy", set()) | tiers.get("medium", set()) | tiers.get("hard", set()) | extra
            if sets[0] != expected or len(plan.stages[0].members) != len(expected):
                violations.append("plain stage must hold every tiered id exactly once")
        else:
            counts = Counter(plan.stages[0].members)
            for tier in ("easy", "medium", "hard"):
                ks = {counts[i] for i in tiers.get(tier, ())}
                if len(ks) > 1:
                    violations.append(f"mixed stage repeats {tier} ids unevenly")
    return violations


def tiers_from_scores(examples, scores: list[DifficultyScore]) -> TieredCorpus:
    from .corpus import partition_identical

    changed, identical = partition_identical(examples)
    return TieredCorpus.from_scores(changed, identical, scores)
