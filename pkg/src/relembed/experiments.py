"""Desk-scale experiments comparing training objectives and score merging.

These are the building blocks behind ``scripts/`` and the acceptance
suite: a noise-robustness comparison of the two training objectives on
synthetic skewed corpora, and a merge benchmark where an uninformative
external score is repaired by the aggregated sentence scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluate import label_against_kb, precision_at_n
from .graph import GraphBuilder, RelationGraph, normalize_conditional, tokenize_textual_relation
from .merge import (
    Candidate,
    MergeModel,
    build_merge_examples,
    negative_sample,
    rank_candidates,
    train_merge,
)
from .synth import SyntheticData, SyntheticSpec, generate, peaked_mapping, relation_name
from .train import TrainConfig, train
from .util import derive_seed


def graph_from_synthetic(data: SyntheticData) -> RelationGraph:
    builder = GraphBuilder(count_na_pairs=False)
    for sid, head, tail, path in data.corpus:
        builder.accumulate_fact(head, tail, tokenize_textual_relation(path), sid)
    for head, rel, tail in data.kb_facts:
        builder.register_kb_fact(head, tail, rel)
    return normalize_conditional(builder.build_counts())


def top1_accuracy(model, graph: RelationGraph, data: SyntheticData) -> float:
    """Fraction of graph rows whose predicted argmax relation matches the
    generator's ground-truth argmax."""
    path_to_idx = {p: i for i, p in enumerate(data.paths)}
    hits = 0
    for rel in graph.textual:
        i = path_to_idx[rel.canonical_key]
        truth = relation_name(int(np.argmax(data.spec.true_mapping[i])))
        pred = graph.kb[int(np.argmax(model.predict(rel)))].name
        hits += pred == truth
    return hits / len(graph.textual)


@dataclass
class NoiseTrialResult:
    seed: int
    accuracy: dict[str, float]
    edges: int


def noise_robustness_trial(
    seed: int,
    *,
    num_kb_relations: int = 20,
    num_textual_relations: int = 200,
    num_sentences: int = 20_000,
    noise_rate: float = 0.3,
    skew: float = 1.3,
    epochs: int = 60,
    embed_size: int = 32,
    state_size: int = 32,
    batch_size: int = 256,
    learning_rate: float = 3e-3,
) -> NoiseTrialResult:
    """Train both objectives on one skewed, mislabeled corpus and report
    their top-1 accuracy against the generator's true mapping.

    Both objectives get identical data, dimensions and step budget; only
    the loss differs, so the comparison isolates how each weighting
    handles skew plus label noise.
    """
    spec = SyntheticSpec(
        num_kb_relations=num_kb_relations,
        num_textual_relations=num_textual_relations,
        true_mapping=peaked_mapping(num_textual_relations, num_kb_relations, seed=seed),
        noise_rate=noise_rate,
        num_entity_pairs=4000,
        num_sentences=num_sentences,
        seed=seed,
        skew=skew,
    )
    data = generate(spec)
    graph = graph_from_synthetic(data)
    accuracy = {}
    for objective in ("global", "local"):
        cfg = TrainConfig(
            objective=objective,
            embed_size=embed_size,
            state_size=state_size,
            batch_size=batch_size,
            learning_rate=learning_rate,
            max_epochs=epochs,
            patience=epochs,
            seed=seed,
        )
        result = train(graph, cfg)
        accuracy[objective] = top1_accuracy(result.model, graph, data)
    return NoiseTrialResult(seed=seed, accuracy=accuracy, edges=graph.num_edges)


@dataclass
class MergeTrialResult:
    seed: int
    base_p50: float
    merged_p50: float
    merge_model: MergeModel


def merge_improvement_trial(
    seed: int,
    *,
    num_pairs: int = 160,
    num_relations: int = 4,
    corrupted_fraction: float = 0.5,
    k_negatives: int = 2,
    epochs: int = 150,
) -> MergeTrialResult:
    """P@50 of the external score alone vs the learned blend.

    Each entity pair holds one true relation; half the truths train the
    blend, the other half are held out for evaluation.  The external
    score is informative only with probability ``1 - corrupted_fraction``
    (otherwise pure noise), while the aggregated sentence-score sum
    separates true from false candidates.
    """
    rng = np.random.default_rng(derive_seed(seed, "merge-benchmark"))
    relations = [relation_name(j) for j in range(num_relations)]
    pairs = [(f"h{i}", f"t{i}") for i in range(num_pairs)]
    true_rel = {p: relations[int(rng.integers(num_relations))] for p in pairs}
    half = num_pairs // 2
    train_kb = [(h, true_rel[(h, t)], t) for h, t in pairs[:half]]
    holdout_kb = [(h, true_rel[(h, t)], t) for h, t in pairs[half:]]
    truth = set(train_kb) | set(holdout_kb)

    scored: dict[Candidate, tuple[float, float]] = {}
    for h, t in pairs:
        for r in relations:
            is_true = (h, r, t) in truth
            u = rng.uniform()
            informative = rng.uniform() >= corrupted_fraction
            e = (0.55 + 0.45 * u if is_true else 0.45 * u) if informative else u
            gsum = rng.uniform(1.2, 2.5) if is_true else rng.uniform(0.0, 0.4)
            scored[Candidate(h, r, t)] = (e, gsum)

    negatives = negative_sample(train_kb, relations, k=k_negatives, seed=derive_seed(seed, "negs"))
    examples = build_merge_examples(scored, train_kb, negatives)
    merge_model = train_merge(examples, lr=0.05, epochs=epochs, seed=seed)

    holdout_pairs = set(pairs[half:])
    eval_scored = {c: s for c, s in scored.items() if c.pair in holdout_pairs}

    def p50(mm: MergeModel) -> float:
        rows = rank_candidates(eval_scored, mm)
        ranked = label_against_kb([(c, blended) for c, _, _, blended in rows], holdout_kb)
        return precision_at_n(ranked, [50])[50]

    return MergeTrialResult(
        seed=seed,
        base_p50=p50(MergeModel(w1=1.0, w2=0.0, cap=0.0)),
        merged_p50=p50(merge_model),
        merge_model=merge_model,
    )
