"""End-to-end runs: configuration, orchestration and run comparison.

A run goes parse -> deduplicate -> partition -> score -> bucket -> plan ->
train per stage -> evaluate per stage -> report. Every artifact lands in a
fresh timestamped directory next to a snapshot of the resolved config.
Nothing in ``report.json`` depends on wall-clock time or on scoring
concurrency, so two runs of the same config produce byte-identical reports.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .corpus import deduplicate, parse_m2, parse_parallel, partition_identical, read_text
from .curriculum import CurriculumPlan, IdenticalPolicy, Strategy, TieredCorpus, plan, stage_dataset, validate_plan
from .difficulty import (
    ENDPOINT_ENV,
    ConfigError,
    Oracle,
    RemoteLLM,
    Replay,
    ScoreCache,
    Tier,
    load_template,
    save_scores,
    score_batch,
    score_by_length,
)
from .evaluation import EvalResult, breakdown_from_scores, paired_t_test, score_sentences, stage_report
from .student import StudentModel, TrainConfig, correct, train_stage

logger = logging.getLogger(__name__)

BACKENDS = ("remote", "replay", "oracle", "length")


class StepError(RuntimeError):
    """A pipeline step failed; ``step`` names it."""

    def __init__(self, step: str, cause: BaseException):
        super().__init__(f"step '{step}' failed: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class Paths:
    corpus: str
    gold_test: str
    output_dir: str
    gold_dev: str | None = None
    cache: str | None = None  # None: a fresh cache inside the run directory
    labels: str | None = None  # planted-label sidecar for the oracle backend
    replay: str | None = None  # canned responses for the replay backend
    template: str | None = None


@dataclass(frozen=True)
class ScoringConfig:
    backend: str = "oracle"
    concurrency: int = 1
    retries: int = 3
    backoff: float = 0.0
    fallback: str = "medium"
    prompt_field: str = "prompt"
    response_field: str = "text"
    timeout: float = 60.0


@dataclass(frozen=True)
class CurriculumConfig:
    strategy: str = "easy"
    identical_policy: str = "all_stages"
    seed: int = 0
    multipliers: tuple[int, int, int] = (3, 2, 1)


@dataclass(frozen=True)
class RunConfig:
    paths: Paths
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    beta: float = 0.5

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> RunConfig:
        """Build from a parsed config; relative paths resolve against ``base_dir``."""
        known = {"paths", "scoring", "curriculum", "train", "beta"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "paths" not in data:
            raise ConfigError("config needs a 'paths' section")
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        raw_paths = dict(data["paths"])
        for key, value in raw_paths.items():
            if value is not None:
                p = Path(value)
                raw_paths[key] = str(p if p.is_absolute() else (base / p).resolve())
        try:
            paths = _build(Paths, raw_paths)
            scoring = _build(ScoringConfig, data.get("scoring", {}))
            cur = dict(data.get("curriculum", {}))
            if "multipliers" in cur:
                cur["multipliers"] = tuple(cur["multipliers"])
            curriculum = _build(CurriculumConfig, cur)
            train = _build(TrainConfig, data.get("train", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(paths, scoring, curriculum, train, float(data.get("beta", 0.5)))

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        out = {
            "paths": asdict(self.paths),
            "scoring": asdict(self.scoring),
            "curriculum": asdict(self.curriculum),
            "train": asdict(self.train),
            "beta": self.beta,
        }
        out["curriculum"]["multipliers"] = list(self.curriculum.multipliers)
        return out

    def override(self, **changes) -> RunConfig:
        """Return a copy with flag values applied; ``None`` values are ignored."""
        cfg = self
        mapping = {
            "backend": "scoring",
            "concurrency": "scoring",
            "strategy": "curriculum",
            "seed": "curriculum",
            "identical_policy": "curriculum",
            "output_dir": "paths",
            "cache": "paths",
        }
        for key, value in changes.items():
            if value is None:
                continue
            section = mapping.get(key)
            if section is None:
                raise ConfigError(f"cannot override {key!r}")
            cfg = replace(cfg, **{section: replace(getattr(cfg, section), **{key: value})})
        return cfg

    def validate(self) -> None:
        """Raise ConfigError for anything that would make a run fail before it starts."""
        required = {"corpus": self.paths.corpus, "gold_test": self.paths.gold_test}
        if self.paths.gold_dev:
            required["gold_dev"] = self.paths.gold_dev
        if self.scoring.backend == "replay":
            if not self.paths.replay:
                raise ConfigError("replay backend needs paths.replay")
            required["replay"] = self.paths.replay
        if self.paths.labels:
            required["labels"] = self.paths.labels
        if self.paths.template:
            required["template"] = self.paths.template
        for name, value in required.items():
            if not Path(value).is_file():
                raise ConfigError(f"paths.{name} does not exist: {value}")
        if self.scoring.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.scoring.backend!r}; choose from {BACKENDS}")
        if self.scoring.backend == "remote" and not os.environ.get(ENDPOINT_ENV):
            raise ConfigError(f"remote backend needs an endpoint (set {ENDPOINT_ENV})")
        if self.scoring.concurrency < 1:
            raise ConfigError("scoring.concurrency must be at least 1")
        if self.scoring.fallback not in ("medium", "drop"):
            raise ConfigError(f"unknown fallback policy {self.scoring.fallback!r}")
        try:
            Strategy(self.curriculum.strategy)
            IdenticalPolicy(self.curriculum.identical_policy)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not isinstance(self.curriculum.seed, int):
            raise ConfigError("curriculum.seed must be an integer")
        if not self.beta > 0:
            raise ConfigError("beta must be positive")


def _build(cls, data: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**data)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def make_backend(cfg: RunConfig):
    name = cfg.scoring.backend
    if name == "oracle":
        return Oracle.from_labels(cfg.paths.labels) if cfg.paths.labels else Oracle()
    if name == "replay":
        return Replay.from_file(cfg.paths.replay)
    if name == "remote":
        return RemoteLLM(
            prompt_field=cfg.scoring.prompt_field,
            response_field=cfg.scoring.response_field,
            timeout=cfg.scoring.timeout,
        )
    raise ConfigError(f"backend {name!r} has no client")


def score_examples(cfg: RunConfig, changed, cache_path):
    """Difficulty scores for the changed pairs under the configured backend."""
    if cfg.scoring.backend == "length":
        return score_by_length(changed) if changed else []
    return score_batch(
        make_backend(cfg),
        changed,
        ScoreCache(cache_path),
        cfg.scoring.concurrency,
        template=load_template(cfg.paths.template),
        retries=cfg.scoring.retries,
        backoff=cfg.scoring.backoff,
        fallback=cfg.scoring.fallback,
    )


def _new_run_dir(output_dir, run_name: str) -> Path:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = f"{run_name}-{stamp}"
    candidate = out / base
    k = 1
    while True:
        try:
            candidate.mkdir()
            return candidate
        except FileExistsError:
            k += 1
            candidate = out / f"{base}-{k}"


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


class _Steps:
    """Runs named steps, wrapping any failure in a StepError naming the step."""

    def __init__(self):
        self.current = None

    def __call__(self, name: str):
        self.current = name
        logger.info("step: %s", name)
        return self

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StepError):
            raise StepError(self.current, exc) from exc
        return False


@dataclass
class RunResult:
    run_dir: Path
    report: dict
    plan: CurriculumPlan
    models: list[StudentModel]


def evaluate_model(model: StudentModel, gold, beta: float = 0.5):
    """(result, breakdown, sentence F scores, hypotheses) of one model on one gold set."""
    sources = gold.sources
    hyps = [correct(model, s)[0] for s in sources]
    scores = score_sentences(sources, hyps, gold, beta)
    total = EvalResult(0, 0, 0)
    for s in scores:
        total = total + s.result
    return total, breakdown_from_scores(sources, scores), [s.result.f(beta) for s in scores], hyps


def run_pipeline(config: RunConfig, run_name: str | None = None) -> RunResult:
    config.validate()
    cur = config.curriculum
    run_dir = _new_run_dir(config.paths.output_dir, run_name or cur.strategy)
    _write_json(run_dir / "config.json", config.to_dict())
    step = _Steps()

    with step("parse"):
        examples = parse_parallel(read_text(config.paths.corpus))
        gold_test = parse_m2(read_text(config.paths.gold_test))
        gold_dev = parse_m2(read_text(config.paths.gold_dev)) if config.paths.gold_dev else None
    with step("dedup"):
        examples = deduplicate(examples)
    with step("partition"):
        changed, identical = partition_identical(examples)
    with step("score"):
        cache_path = config.paths.cache or run_dir / "score_cache.jsonl"
        scores = score_examples(config, changed, cache_path)
        save_scores(scores, run_dir / "scores.jsonl")
    with step("bucket"):
        tiers = TieredCorpus.from_scores(changed, identical, scores)
    with step("plan"):
        the_plan = plan(cur.strategy, tiers, cur.identical_policy, cur.seed, cur.multipliers)
        problems = validate_plan(the_plan)
        if problems:
            raise ValueError("; ".join(problems))
        the_plan.save(run_dir / "plan.json")

    lookup = tiers.examples()
    validation = (gold_dev.sources, gold_dev) if gold_dev is not None else None
    model = StudentModel(config.train)
    models, names, results, breakdowns, sentence_scores, metrics = [], [], [], [], {}, []
    (run_dir / "checkpoints").mkdir()
    (run_dir / "hypotheses").mkdir()
    for k, st in enumerate(the_plan.stages):
        with step(f"train stage {k + 1} ({st.name})"):
            model, m = train_stage(model, stage_dataset(the_plan, k, lookup), config.train, validation)
            model.save(run_dir / "checkpoints" / f"stage{k + 1}-{st.name}.json")
            metrics.append(asdict(m))
        with step(f"evaluate stage {k + 1} ({st.name})"):
            result, by_type, sent_f, hyps = evaluate_model(model, gold_test, config.beta)
            (run_dir / "hypotheses" / f"stage{k + 1}-{st.name}.txt").write_text(
                "".join(" ".join(h) + "\n" for h in hyps), encoding="utf-8"
            )
        models.append(model)
        names.append(st.name)
        results.append(result)
        breakdowns.append(by_type)
        sentence_scores[st.name] = sent_f

    with step("report"):
        tier_counts = {t.name.lower(): 0 for t in Tier}
        for s in scores:
            tier_counts[s.tier.name.lower()] += 1
        report = stage_report(names, results, breakdowns)
        report_data = {
            "strategy": cur.strategy,
            "identical_policy": cur.identical_policy,
            "seed": cur.seed,
            "beta": config.beta,
            "gold_test_sha256": sha256_file(config.paths.gold_test),
            "corpus_sha256": sha256_file(config.paths.corpus),
            "data": {
                "pairs": len(examples),
                "changed": len(changed),
                "identical": len(identical),
                "scored": len(scores),
                "flagged": sum(s.flagged for s in scores),
                "tiers": tier_counts,
            },
            "stage_sizes": [len(st.members) for st in the_plan.stages],
            **report.to_dict(),
        }
        _write_json(run_dir / "report.json", report_data)
        header = (
            f"strategy {cur.strategy}  seed {cur.seed}  identical {cur.identical_policy}\n"
            f"pairs {len(examples)}  changed {len(changed)}  identical {len(identical)}  "
            f"tiers E/M/H {tier_counts['easy']}/{tier_counts['medium']}/{tier_counts['hard']}\n\n"
        )
        (run_dir / "report.txt").write_text(header + report.render(), encoding="utf-8")
        _write_json(run_dir / "sentence_scores.json", sentence_scores)
        _write_json(run_dir / "train_metrics.json", metrics)
        _write_json(
            run_dir / "manifest.json",
            {"gold_test_sha256": report_data["gold_test_sha256"], "corpus_sha256": report_data["corpus_sha256"]},
        )
    return RunResult(run_dir, report_data, the_plan, models)


# --- comparison --------------------------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    rows: tuple[tuple[str, str, EvalResult], ...]  # (run label, final stage name, result)
    p_value: float
    beta: float

    def render(self) -> str:
        from .evaluation import _table

        table = [("run", "final stage", "TP", "FP", "FN", "P", "R", f"F{self.beta:g}")]
        for label, stage, r in self.rows:
            table.append(
                (label, stage, str(r.tp), str(r.fp), str(r.fn), f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.f(self.beta):.4f}")
            )
        return _table(table) + f"\n\npaired t-test on sentence F{self.beta:g}: p = {self.p_value:.4g}\n"

    def to_dict(self) -> dict:
        return {
            "rows": [{"run": label, "stage": stage, **r.to_dict()} for label, stage, r in self.rows],
            "p_value": self.p_value,
        }


def _load_run(run_dir):
    run_dir = Path(run_dir)
    try:
        report = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
        sentences = json.loads((run_dir / "sentence_scores.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"{run_dir} is not a completed run directory: {exc}") from exc
    return report, sentences


def compare_runs(run_a, run_b) -> Comparison:
    """Final-stage scores side by side plus a paired t-test on sentence-level F."""
    rep_a, sent_a = _load_run(run_a)
    rep_b, sent_b = _load_run(run_b)
    if rep_a["gold_test_sha256"] != rep_b["gold_test_sha256"]:
        raise ConfigError("runs were evaluated on different gold sets")
    if rep_a["beta"] != rep_b["beta"]:
        raise ConfigError("runs use different beta values")
    rows = []
    finals = []
    for run, rep, sent in ((run_a, rep_a, sent_a), (run_b, rep_b, sent_b)):
        final = rep["stages"][-1]
        rows.append((Path(run).name, final["name"], EvalResult(final["tp"], final["fp"], final["fn"])))
        finals.append(sent[final["name"]])
    return Comparison(tuple(rows), paired_t_test(finals[0], finals[1]), rep_a["beta"])
