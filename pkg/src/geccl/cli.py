"""Command-line entry point.

Each pipeline step is its own subcommand so it can be rerun in isolation;
``pipeline`` runs them all from one config file. Flags override config values.
Exit codes: 0 success, 1 validation error, 2 a step failed at runtime.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

from .corpus import CorpusError, deduplicate, parse_m2, parse_parallel, partition_identical, read_text
from .curriculum import CurriculumPlan, PlanError, Strategy, TieredCorpus, plan, stage_dataset, validate_plan
from .difficulty import BackendError, ConfigError, Tier, load_scores, save_scores
from .evaluation import breakdown, m2_score, stage_report
from .pipeline import (
    BACKENDS,
    CurriculumConfig,
    Paths,
    RunConfig,
    ScoringConfig,
    StepError,
    compare_runs,
    evaluate_model,
    run_pipeline,
    score_examples,
)
from .student import StudentModel, TrainConfig, train_stage
from .synthetic import SyntheticSpec, gen_synthetic

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(ValueError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its values")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--concurrency", type=int)


def _load_config(args, **paths) -> RunConfig:
    """Config from --config (if any) with flags applied on top."""
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig(Paths(corpus="", gold_test="", output_dir="runs"), ScoringConfig(), CurriculumConfig(), TrainConfig())
    overrides = {k: v for k, v in paths.items() if v is not None}
    if overrides:
        cfg = replace(cfg, paths=replace(cfg.paths, **{k: str(Path(v).resolve()) for k, v in overrides.items()}))
    return cfg.override(
        backend=args.backend,
        strategy=args.strategy,
        seed=args.seed,
        concurrency=args.concurrency,
    )


def _need(value, what: str):
    if not value:
        raise UsageError(f"{what} is required (flag or config)")
    return value


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _examples(path):
    return deduplicate(parse_parallel(read_text(path)))


# --- subcommands -------------------------------------------------------------------

def cmd_parse(args) -> None:
    text = read_text(args.input)
    if args.m2:
        gold = parse_m2(text)
        edits = sum(len(s.edits) for s in gold.sentences)
        info = {"sentences": len(gold), "edits": edits, "annotators": gold.annotators()}
    else:
        raw = parse_parallel(text)
        examples = deduplicate(raw)
        changed, identical = partition_identical(examples)
        info = {"pairs": len(raw), "distinct": len(examples), "changed": len(changed), "identical": len(identical)}
        if args.out:
            from .corpus import write_parallel

            Path(args.out).write_text(write_parallel(examples), encoding="utf-8")
    print(json.dumps(info))


def cmd_score(args) -> None:
    cfg = _load_config(args, corpus=args.corpus, labels=args.labels, replay=args.replay, template=args.template)
    examples = _examples(_need(cfg.paths.corpus, "--corpus"))
    changed, _ = partition_identical(examples)
    cache = args.cache or cfg.paths.cache
    scores = score_examples(cfg, changed, cache)
    out = _need(args.out, "--out")
    save_scores(scores, out)
    counts = Counter(s.tier.name.lower() for s in scores)
    print(json.dumps({"scored": len(scores), "flagged": sum(s.flagged for s in scores), "tiers": dict(sorted(counts.items()))}))


def cmd_bucket(args) -> None:
    scores = load_scores(args.scores)
    tiers = {t.name.lower(): [s.example_id for s in scores if s.tier is t] for t in Tier}
    text = json.dumps(tiers) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(json.dumps({k: len(v) for k, v in tiers.items()}))


def _tiers(corpus_path, scores_path) -> TieredCorpus:
    examples = _examples(corpus_path)
    changed, identical = partition_identical(examples)
    return TieredCorpus.from_scores(changed, identical, load_scores(scores_path))


def cmd_plan(args) -> None:
    cfg = _load_config(args, corpus=args.corpus)
    cur = cfg.curriculum
    tiers = _tiers(_need(cfg.paths.corpus, "--corpus"), args.scores)
    the_plan = plan(cur.strategy, tiers, args.identical_policy or cur.identical_policy, cur.seed, cur.multipliers)
    problems = validate_plan(the_plan)
    if problems:
        raise PlanError("; ".join(problems))
    _emit(json.dumps(the_plan.to_dict()) + "\n", args.out)
    if args.out:
        print(json.dumps({"strategy": cur.strategy, "stages": [[st.name, len(st.members)] for st in the_plan.stages]}))


def cmd_train(args) -> None:
    cfg = _load_config(args, corpus=args.corpus, gold_dev=args.dev)
    the_plan = CurriculumPlan.load(args.plan)
    problems = validate_plan(the_plan)
    if problems:
        raise PlanError("; ".join(problems))
    lookup = {ex.id: ex for ex in _examples(_need(cfg.paths.corpus, "--corpus"))}
    dev = parse_m2(read_text(cfg.paths.gold_dev)) if cfg.paths.gold_dev else None
    out = Path(_need(args.out, "--out"))
    out.mkdir(parents=True, exist_ok=True)
    model = StudentModel.load(args.init) if args.init else StudentModel(cfg.train)
    for k, st in enumerate(the_plan.stages):
        try:
            data = stage_dataset(the_plan, k, lookup)
        except KeyError as exc:
            raise PlanError(str(exc)) from exc
        model, metrics = train_stage(model, data, cfg.train, (dev.sources, dev) if dev else None)
        path = out / f"stage{k + 1}-{st.name}.json"
        model.save(path)
        print(json.dumps({"stage": st.name, "checkpoint": str(path), "passes": metrics.passes, "rules": metrics.rule_count}))


def cmd_eval(args) -> None:
    gold = parse_m2(read_text(args.gold))
    if args.model:
        model = StudentModel.load(args.model)
        result, by_type, _, _ = evaluate_model(model, gold, args.beta)
    elif args.hyp:
        hyps = [tuple(line.split(" ")) if line else () for line in read_text(args.hyp).splitlines()]
        result = m2_score(gold.sources, hyps, gold, args.beta)
        by_type = breakdown(gold.sources, hyps, gold, args.beta)
    else:
        raise UsageError("eval needs --model or --hyp")
    report = stage_report([Path(args.model or args.hyp).stem], [result], [by_type])
    _emit(report.render(), args.out)


def cmd_report(args) -> None:
    from .evaluation import StageReport

    data = json.loads(read_text(Path(args.run) / "report.json"))
    _emit(StageReport.from_dict(data).render(), args.out)


def cmd_gen(args) -> None:
    spec = SyntheticSpec(
        n_pairs=args.n,
        identity_rate=args.identity_rate,
        n_dev=args.n_dev,
        n_test=args.n_test,
        seed=7 if args.seed is None else args.seed,
    )
    paths = gen_synthetic(spec).write(_need(args.out, "--out"))
    print(json.dumps({k: str(v) for k, v in paths.items()}))


def cmd_pipeline(args) -> None:
    cfg = RunConfig.load(_need(args.config, "--config")).override(
        backend=args.backend,
        strategy=args.strategy,
        seed=args.seed,
        concurrency=args.concurrency,
        output_dir=str(Path(args.out).resolve()) if args.out else None,
    )
    result = run_pipeline(cfg, args.name)
    print(result.run_dir)


def cmd_compare(args) -> None:
    comparison = compare_runs(args.run_a, args.run_b)
    if args.json:
        _emit(json.dumps(comparison.to_dict(), indent=2) + "\n", args.out)
    else:
        _emit(comparison.render(), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geccl", description="Difficulty-scored curriculum training for GEC.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="validate a parallel TSV or M2 file and print counts")
    p.add_argument("input")
    p.add_argument("--m2", action="store_true", help="input is an M2 gold file")
    p.add_argument("--out", help="write the deduplicated parallel corpus here")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("score", help="score changed pairs for difficulty")
    _common(p)
    p.add_argument("--corpus")
    p.add_argument("--labels", help="planted-label sidecar for the oracle backend")
    p.add_argument("--replay", help="canned responses for the replay backend")
    p.add_argument("--template", help="prompt template file")
    p.add_argument("--cache", help="score cache (JSON Lines)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bucket", help="group scores into easy/medium/hard tiers")
    p.add_argument("scores")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bucket)

    p = sub.add_parser("plan", help="build a curriculum plan")
    _common(p)
    p.add_argument("--corpus")
    p.add_argument("--scores", required=True)
    p.add_argument("--identical-policy", choices=["exclude", "all_stages"])
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", help="train the student through every stage of a plan")
    _common(p)
    p.add_argument("--corpus")
    p.add_argument("--plan", required=True)
    p.add_argument("--dev", help="M2 gold used for convergence checks")
    p.add_argument("--init", help="checkpoint to start from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint or a hypothesis file against M2 gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--model")
    p.add_argument("--hyp", help="one tokenized hypothesis per line")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render the report of a finished run")
    p.add_argument("run")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen", help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--identity-rate", type=float, default=0.4)
    p.add_argument("--n-dev", type=int, default=300)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pipeline", help="run every step from a config file")
    _common(p)
    p.add_argument("--name", help="run directory prefix (default: the strategy)")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("compare", help="compare the final stages of two runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


VALIDATION_ERRORS = (ConfigError, CorpusError, PlanError, UsageError, FileNotFoundError, json.JSONDecodeError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StepError, BackendError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
