"""Combine embedding-model scores with an external extractor's scores.

The embedding model scores single sentences: for a candidate fact
(head, r, tail) seen in a sentence with textual relation t, the sentence
score is p(r | t).  Sentence scores for a candidate are aggregated with a
capped sum, then blended with the external model's score by a weighted
sum whose weights (and the cap) are fit with a pairwise hinge loss
against corrupted negatives.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError
from .graph import DEFAULT_NA_NAME, TextualRelation, tokenize_textual_relation
from .model import EmbeddingModel
from .util import derive_seed, fmt_float

Fact = tuple[str, str, str]  # (head, relation, tail)
Pair = tuple[str, str]


@dataclass(frozen=True)
class Candidate:
    head: str
    relation: str
    tail: str

    @property
    def fact(self) -> Fact:
        return (self.head, self.relation, self.tail)

    @property
    def pair(self) -> Pair:
        return (self.head, self.tail)


@dataclass(frozen=True)
class SentenceScore:
    candidate: Candidate
    sentence_id: str
    path: TextualRelation
    g: float


def sentence_scores(
    model: EmbeddingModel,
    candidate: Candidate,
    contexts: Sequence[tuple[str, TextualRelation]],
) -> list[SentenceScore]:
    """Per-sentence match scores p(r | t) for one candidate fact."""
    j = model.relation_index(candidate.relation)
    return [
        SentenceScore(candidate, sid, path, float(model.predict(path)[j]))
        for sid, path in contexts
    ]


def aggregate(scores: Iterable[float], cap: float) -> float:
    """Capped sum: signals add up, but only to a bounded degree."""
    if cap < 0:
        raise DataError("cap must be >= 0")
    return min(cap, sum(scores))


def aggregate_max(scores: Iterable[float]) -> float:
    """At-least-one baseline; loses the supporting-sentence count."""
    return max(scores, default=0.0)


def aggregate_mean(scores: Iterable[float]) -> float:
    """Mean-pooling baseline; wrongly labeled sentences flatten it."""
    vals = list(scores)
    return sum(vals) / len(vals) if vals else 0.0


@dataclass
class MergeModel:
    """Trainable blend of external score E and aggregated score G."""

    w1: float = 1.0
    w2: float = 1.0
    cap: float = 1.0

    def __post_init__(self):
        if self.cap < 0:
            raise DataError("cap must be >= 0")


def combine(merge: MergeModel, e_score: float, g_score: float) -> float:
    return merge.w1 * e_score + merge.w2 * g_score


def candidate_score(merge: MergeModel, e_score: float, g_sum: float) -> float:
    """Blended score with the cap applied to the raw sentence-score sum."""
    return merge.w1 * e_score + merge.w2 * min(merge.cap, g_sum)


@dataclass(frozen=True)
class MergeExample:
    """One true fact with corrupted negatives sharing its entity pair.

    Carries external scores and *uncapped* sentence-score sums so the
    cap's subgradient can flow during training.
    """

    pos_e: float
    pos_gsum: float
    neg_e: tuple[float, ...]
    neg_gsum: tuple[float, ...]

    def __post_init__(self):
        if not self.neg_e or len(self.neg_e) != len(self.neg_gsum):
            raise DataError("a merge example needs at least one negative")


def hinge_loss(merge: MergeModel, examples: Sequence[MergeExample]) -> float:
    """Mean over all (positive, negative) pairs of max(0, 1 + E~(neg) - E~(pos))."""
    total, pairs = 0.0, 0
    for ex in examples:
        pos = candidate_score(merge, ex.pos_e, ex.pos_gsum)
        for e, gsum in zip(ex.neg_e, ex.neg_gsum):
            total += max(0.0, 1.0 + candidate_score(merge, e, gsum) - pos)
            pairs += 1
    if pairs == 0:
        raise DataError("no (positive, negative) pairs")
    return total / pairs


def hinge_gradients(merge: MergeModel, examples: Sequence[MergeExample]) -> tuple[float, float, float]:
    """Subgradient of the hinge loss in (w1, w2, cap).

    At the hinge kink and where a sum sits exactly at the cap, the
    zero ("no violation" / inactive) side is chosen.
    """
    d1 = d2 = dcap = 0.0
    pairs = 0
    for ex in examples:
        pos = candidate_score(merge, ex.pos_e, ex.pos_gsum)
        pos_g = min(merge.cap, ex.pos_gsum)
        pos_capped = merge.cap < ex.pos_gsum
        for e, gsum in zip(ex.neg_e, ex.neg_gsum):
            pairs += 1
            neg = candidate_score(merge, e, gsum)
            if 1.0 + neg - pos > 0.0:
                neg_g = min(merge.cap, gsum)
                d1 += e - ex.pos_e
                d2 += neg_g - pos_g
                dcap += merge.w2 * ((1.0 if merge.cap < gsum else 0.0) - (1.0 if pos_capped else 0.0))
    if pairs == 0:
        raise DataError("no (positive, negative) pairs")
    return d1 / pairs, d2 / pairs, dcap / pairs


def train_merge(
    examples: Sequence[MergeExample],
    init: MergeModel | None = None,
    lr: float = 0.05,
    epochs: int = 200,
    seed: int = 0,
    val_fraction: float = 0.1,
) -> MergeModel:
    """Full-batch subgradient descent on the hinge loss.

    A seeded shuffle reserves `val_fraction` of the examples for
    validation; the parameters with the best validation loss are
    returned.  The cap is projected back to >= 0 after every step.
    """
    if not examples:
        raise DataError("empty merge training set")
    current = replace(init) if init is not None else MergeModel()
    rng = np.random.default_rng(derive_seed(seed, "merge-split"))
    order = rng.permutation(len(examples))
    n_val = int(len(examples) * val_fraction)
    val = [examples[k] for k in order[:n_val]]
    trn = [examples[k] for k in order[n_val:]] or list(examples)
    if not val:
        val = trn

    best = replace(current)
    best_loss = hinge_loss(current, val)
    for _ in range(epochs):
        d1, d2, dcap = hinge_gradients(current, trn)
        current.w1 -= lr * d1
        current.w2 -= lr * d2
        current.cap = max(0.0, current.cap - lr * dcap)
        val_loss = hinge_loss(current, val)
        if val_loss < best_loss:
            best_loss = val_loss
            best = replace(current)
    return best


def negative_sample(
    kb_facts: Sequence[Fact],
    candidate_pool: Sequence[str],
    k: int,
    seed: int,
    exclude_facts: set[Fact] | None = None,
) -> list[list[str]]:
    """For each positive (e, r, e'), draw k replacement relations r' != r,
    uniformly without replacement, such that (e, r', e') is not itself a
    KB fact.  Deterministic given the seed.

    ``exclude_facts`` widens the exclusion set beyond the positives list
    (e.g. to the whole KB when only a subset of facts is being corrupted).
    """
    fact_set = set(kb_facts) if exclude_facts is None else set(exclude_facts) | set(kb_facts)
    pool = sorted(set(candidate_pool))
    rng = np.random.default_rng(derive_seed(seed, "negative-sample"))
    out: list[list[str]] = []
    for head, rel, tail in kb_facts:
        valid = [r for r in pool if r != rel and (head, r, tail) not in fact_set]
        if len(valid) < k:
            raise DataError(
                f"only {len(valid)} replacement relations for ({head}, {rel}, {tail}); need {k}"
            )
        picks = rng.choice(len(valid), size=k, replace=False)
        out.append([valid[int(p)] for p in picks])
    return out


# ---------------------------------------------------------------------------
# Candidate scoring tables and files
# ---------------------------------------------------------------------------

def score_candidates(
    model: EmbeddingModel,
    candidates: Sequence[Candidate],
    contexts: Mapping[Pair, Sequence[tuple[str, TextualRelation]]],
) -> dict[Candidate, float]:
    """Uncapped sentence-score sums, with per-path distributions cached so
    each distinct dependency path is encoded once."""
    dist_cache: dict[str, np.ndarray] = {}
    out: dict[Candidate, float] = {}
    for cand in candidates:
        j = model.relation_index(cand.relation)
        total = 0.0
        for _, path in contexts.get(cand.pair, ()):  # empty sum when no contexts
            key = path.canonical_key
            dist = dist_cache.get(key)
            if dist is None:
                dist = model.predict(path)
                dist_cache[key] = dist
            total += float(dist[j])
        out[cand] = total
    return out


def rank_candidates(
    scored: Mapping[Candidate, tuple[float, float]],
    merge: MergeModel,
    na_name: str = DEFAULT_NA_NAME,
) -> list[tuple[Candidate, float, float, float]]:
    """(candidate, E, capped G, blended score) sorted by blended score
    descending; ties broken lexicographically.  NA candidates are dropped
    from ranked output."""
    rows = []
    for cand, (e, gsum) in scored.items():
        if cand.relation == na_name:
            continue
        g = min(merge.cap, gsum)
        rows.append((cand, e, g, combine(merge, e, g)))
    rows.sort(key=lambda r: (-r[3], r[0].head, r[0].relation, r[0].tail))
    return rows


def write_merged_tsv(rows: Sequence[tuple[Candidate, float, float, float]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for cand, e, g, blended in rows:
            fh.write(
                f"{cand.head}\t{cand.relation}\t{cand.tail}\t"
                f"{fmt_float(e)}\t{fmt_float(g)}\t{fmt_float(blended)}\n"
            )


def read_merged_tsv(path: str | Path) -> list[tuple[Candidate, float, float, float]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise ParseError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(parts)}")
            cand = Candidate(parts[0], parts[1], parts[2])
            rows.append((cand, float(parts[3]), float(parts[4]), float(parts[5])))
    return rows


def read_base_scores(path: str | Path) -> dict[Candidate, float]:
    """External model's candidate scores: head, relation, tail, score."""
    out: dict[Candidate, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            out[Candidate(parts[0], parts[1], parts[2])] = float(parts[3])
    return out


def read_contexts(path: str | Path) -> dict[Pair, list[tuple[str, TextualRelation]]]:
    """Contextual sentences per entity pair: head, tail, sentence_id, path."""
    out: dict[Pair, list[tuple[str, TextualRelation]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            head, tail, sid, path_text = parts
            try:
                rel = tokenize_textual_relation(path_text)
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}", exc.offset) from exc
            out.setdefault((head, tail), []).append((sid, rel))
    return out


def write_scores_tsv(scored: Mapping[Candidate, tuple[float, float]], path: str | Path) -> None:
    """Intermediate table: head, relation, tail, E, uncapped G sum."""
    rows = sorted(scored.items(), key=lambda kv: kv[0].fact)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for cand, (e, gsum) in rows:
            fh.write(f"{cand.head}\t{cand.relation}\t{cand.tail}\t{fmt_float(e)}\t{fmt_float(gsum)}\n")


def read_scores_tsv(path: str | Path) -> dict[Candidate, tuple[float, float]]:
    out: dict[Candidate, tuple[float, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
            out[Candidate(parts[0], parts[1], parts[2])] = (float(parts[3]), float(parts[4]))
    return out


def build_merge_examples(
    scored: Mapping[Candidate, tuple[float, float]],
    positives: Sequence[Fact],
    negatives: Sequence[Sequence[str]],
) -> list[MergeExample]:
    """Pair each scored positive fact with its sampled corruptions.

    Candidates missing from the score table default to (0, 0): the
    external model assigned them no mass and no context supports them.
    """
    examples = []
    for fact, negs in zip(positives, negatives):
        head, rel, tail = fact
        pos = scored.get(Candidate(head, rel, tail))
        if pos is None:
            continue
        neg_e, neg_g = [], []
        for r in negs:
            e, gsum = scored.get(Candidate(head, r, tail), (0.0, 0.0))
            neg_e.append(e)
            neg_g.append(gsum)
        examples.append(MergeExample(pos[0], pos[1], tuple(neg_e), tuple(neg_g)))
    return examples
