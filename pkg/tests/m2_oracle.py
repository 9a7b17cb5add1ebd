"""Exhaustive reference scorer for small sentences.

It shares no code with the lattice implementation. It enumerates every
minimal-cost alignment by recursion, then every way of cutting each
alignment into edits. A piece is either one changed step, or a run of steps
that starts and ends with a changed step and holds at most ``max_unchanged``
unchanged steps. Every decomposition is scored against every annotator.
"""

from __future__ import annotations

import random
from functools import lru_cache

from geccl.corpus import AnnotatedCorpus, AnnotatedSentence, GoldEdit


def min_alignments(src, hyp):
    """All minimal-cost step sequences; a step is (kind, src_token_or_None, hyp_token_or_None)."""
    src, hyp = tuple(src), tuple(hyp)

    @lru_cache(maxsize=None)
    def cost(i, j):
        if i == len(src):
            return len(hyp) - j
        if j == len(hyp):
            return len(src) - i
        return min(
            cost(i + 1, j + 1) + (src[i] != hyp[j]),
            cost(i + 1, j) + 1,
            cost(i, j + 1) + 1,
        )

    @lru_cache(maxsize=None)
    def paths(i, j):
        if i == len(src) and j == len(hyp):
            return [()]
        here = cost(i, j)
        out = []
        if i < len(src) and j < len(hyp):
            same = src[i] == hyp[j]
            if cost(i + 1, j + 1) + (not same) == here:
                step = ("keep" if same else "sub", src[i], hyp[j])
                out += [(step,) + rest for rest in paths(i + 1, j + 1)]
        if i < len(src) and cost(i + 1, j) + 1 == here:
            out += [(("del", src[i], None),) + rest for rest in paths(i + 1, j)]
        if j < len(hyp) and cost(i, j + 1) + 1 == here:
            out += [(("ins", None, hyp[j]),) + rest for rest in paths(i, j + 1)]
        return out

    return paths(0, 0)


def segmentations(steps, max_unchanged=2):
    """Every edit decomposition of one alignment, as tuples of (start, end, correction)."""
    # source offset before each step
    offsets = []
    pos = 0
    for kind, s, _ in steps:
        offsets.append(pos)
        if kind != "ins":
            pos += 1
    changed = [k for k, (kind, _, _) in enumerate(steps) if kind != "keep"]

    def piece(a, b):
        src_start = offsets[a]
        src_end = offsets[b] + (steps[b][0] != "ins")
        corr = tuple(t for kind, _, t in steps[a : b + 1] if kind != "del")
        return (src_start, src_end, corr)

    results = set()

    def go(idx, acc):
        if idx == len(changed):
            results.add(tuple(acc))
            return
        a = changed[idx]
        for stop in range(idx, len(changed)):
            b = changed[stop]
            unchanged = sum(1 for k in range(a, b + 1) if steps[k][0] == "keep")
            if unchanged > max_unchanged:
                break
            go(stop + 1, acc + [piece(a, b)])

    go(0, [])
    return results


def all_decompositions(src, hyp, max_unchanged=2):
    out = set()
    for steps in min_alignments(src, hyp):
        out |= segmentations(steps, max_unchanged)
    return out


def f_beta(tp, fp, fn, beta=0.5):
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    if p == 0 and r == 0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * p * r / (b2 * p + r)


def oracle_sentence(src, hyp, gold_sets, beta=0.5, max_unchanged=2):
    decomps = all_decompositions(src, hyp, max_unchanged)
    best = None
    for ann in sorted(gold_sets):
        gold = gold_sets[ann]
        counts = []
        for d in decomps:
            tp = len(set(d) & gold)
            counts.append((tp, -len(d), (tp, len(d) - tp, len(gold) - tp)))
        _, _, chosen = max(counts)
        f = f_beta(*chosen, beta)
        if best is None or f > best[0]:
            best = (f, chosen)
    return best[1]


def oracle_corpus(sources, hyps, corpus: AnnotatedCorpus, beta=0.5):
    tp = fp = fn = 0
    for src, hyp, sent in zip(sources, hyps, corpus.sentences):
        a, b, c = oracle_sentence(src, hyp, sent.gold_sets(), beta)
        tp, fp, fn = tp + a, fp + b, fn + c
    return tp, fp, fn


# --- random cases ----------------------------------------------------------------

VOCAB = ["a", "b", "c", "d", "the", "x"]


def random_edits(rng, n_tokens, max_edits, annotator):
    edits = []
    used = set()
    for _ in range(rng.randint(0, max_edits)):
        start = rng.randint(0, n_tokens)
        kind = rng.choice(["sub", "ins", "del", "sub2"])
        if kind == "ins":
            end = start
            corr = (rng.choice(VOCAB),)
        else:
            if start == n_tokens:
                continue
            end = min(n_tokens, start + (2 if kind == "sub2" else 1))
            corr = () if kind == "del" else tuple(rng.choice(VOCAB) for _ in range(rng.randint(1, 2)))
        span = set(range(start - 1, end + 1))
        if span & used:
            continue
        used |= span
        edits.append(GoldEdit(start, end, "X", corr, annotator))
    edits.sort(key=lambda e: (e.start, e.end))
    return edits


def apply(src, edits):
    out = list(src)
    for e in sorted(edits, key=lambda e: (e.start, e.end), reverse=True):
        out[e.start : e.end] = list(e.correction)
    return tuple(out)


def random_case(rng, max_tokens=8, max_edits=3, annotators=2):
    n = rng.randint(1, max_tokens)
    src = tuple(rng.choice(VOCAB) for _ in range(n))
    edits = []
    for ann in range(annotators):
        ann_edits = random_edits(rng, n, max_edits, ann)
        if not ann_edits:
            ann_edits = [GoldEdit(-1, -1, "noop", (), ann)]
        edits.extend(ann_edits)
    sentence = AnnotatedSentence(src, tuple(edits))
    # hypothesis: a random subset of one annotator's edits plus some noise
    chosen = [e for e in edits if e.annotator == rng.randrange(annotators) and not e.is_noop]
    chosen = [e for e in chosen if rng.random() < 0.7]
    hyp = list(apply(src, chosen))
    for _ in range(rng.randint(0, 2)):
        if hyp and rng.random() < 0.5:
            hyp[rng.randrange(len(hyp))] = rng.choice(VOCAB)
        else:
            hyp.insert(rng.randint(0, len(hyp)), rng.choice(VOCAB))
    return src, tuple(hyp), sentence


def random_corpus(seed, n=200, **kw):
    rng = random.Random(seed)
    sources, hyps, sents = [], [], []
    for _ in range(n):
        s, h, sent = random_case(rng, **kw)
        sources.append(s)
        hyps.append(h)
        sents.append(sent)
    return sources, hyps, AnnotatedCorpus(tuple(sents), True)
