"""Synthetic distant-supervision corpora with a controllable mislabeling rate.

Each generated sentence picks a dependency path, samples the relation it
truly expresses from a per-path ground-truth distribution, and is
attached to an entity pair whose registered KB fact carries that
relation; with probability ``noise_rate`` the registered fact carries a
*different* relation instead, so the resulting corpus mislabels the
sentence exactly the way distant supervision does.  Path frequencies
follow a configurable Zipf skew, mirroring the heavy skew of real
co-occurrence counts (``skew=0`` is uniform).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .graph import DEFAULT_NA_NAME
from .util import derive_seed, fmt_float


@dataclass
class SyntheticSpec:
    num_kb_relations: int
    num_textual_relations: int
    true_mapping: np.ndarray  # (textual, kb) rows sum to 1
    noise_rate: float
    num_entity_pairs: int
    num_sentences: int
    seed: int
    skew: float = 0.0

    def __post_init__(self):
        self.true_mapping = np.asarray(self.true_mapping, dtype=np.float64)
        T, R = self.num_textual_relations, self.num_kb_relations
        if self.true_mapping.shape != (T, R):
            raise DataError(f"true_mapping must be shaped ({T}, {R})")
        sums = self.true_mapping.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9) or np.any(self.true_mapping < 0):
            raise DataError("each true_mapping row must be a probability distribution")
        if not 0.0 <= self.noise_rate < 1.0:
            raise DataError("noise_rate must lie in [0, 1)")
        if self.noise_rate > 0 and R < 2:
            raise DataError("mislabeling needs at least two KB relations")


def relation_name(j: int) -> str:
    return f"rel{j:03d}"


def path_text(i: int, rng: np.random.Generator) -> str:
    """Synthesize a path for textual relation i: a unique anchor word plus
    dependency tokens drawn from a small shared pool, in one of three
    length patterns so sequences of different shapes occur."""
    a, b, c = rng.integers(0, 8, size=3)
    if i % 3 == 0:
        return f"w{i}"
    if i % 3 == 1:
        return f"<-dep{a} w{i} dep{b}->"
    return f"<-dep{a} w{i} dep{b}-> of dep{c}->"


def peaked_mapping(
    num_textual: int, num_kb: int, seed: int, main_low: float = 0.7, main_high: float = 0.95
) -> np.ndarray:
    """Ground-truth rows with one dominant relation and a little mass spread
    over up to three others; entries below 2% are zeroed and the row
    renormalized, so every surviving edge is likely to be sampled."""
    rng = np.random.default_rng(derive_seed(seed, "mapping"))
    mapping = np.zeros((num_textual, num_kb))
    for i in range(num_textual):
        main = int(rng.integers(num_kb))
        p_main = rng.uniform(main_low, main_high)
        mapping[i, main] = p_main
        others = [j for j in range(num_kb) if j != main]
        rng.shuffle(others)
        spread = others[: min(3, len(others))]
        if spread:
            weights = rng.dirichlet(np.ones(len(spread)))
            mapping[i, spread] = (1.0 - p_main) * weights
        row = mapping[i]
        row[row < 0.02] = 0.0
        mapping[i] = row / row.sum()
    return mapping


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    paths: list[str]
    corpus: list[tuple[str, str, str, str]]  # sentence_id, head, tail, path
    kb_facts: list[tuple[str, str, str]]  # head, relation, tail (creation order)
    pair_labels: dict[tuple[str, str], int] = field(default_factory=dict)


def generate(spec: SyntheticSpec) -> SyntheticData:
    T, R = spec.num_textual_relations, spec.num_kb_relations
    path_rng = np.random.default_rng(derive_seed(spec.seed, "paths"))
    paths = [path_text(i, path_rng) for i in range(T)]

    if spec.skew > 0:
        freq = 1.0 / np.arange(1, T + 1) ** spec.skew
    else:
        freq = np.ones(T)
    freq /= freq.sum()

    rng = np.random.default_rng(derive_seed(spec.seed, "sentences"))
    pools: list[list[tuple[str, str]]] = [[] for _ in range(R)]
    pair_labels: dict[tuple[str, str], int] = {}
    kb_facts: list[tuple[str, str, str]] = []
    corpus: list[tuple[str, str, str, str]] = []

    def take_pair(label: int) -> tuple[str, str]:
        if len(pair_labels) < spec.num_entity_pairs or not pools[label]:
            n = len(pair_labels)
            pair = (f"e{2 * n}", f"e{2 * n + 1}")
            pair_labels[pair] = label
            pools[label].append(pair)
            kb_facts.append((pair[0], relation_name(label), pair[1]))
            return pair
        pool = pools[label]
        return pool[int(rng.integers(len(pool)))]

    for s in range(spec.num_sentences):
        t = int(rng.choice(T, p=freq))
        r_true = int(rng.choice(R, p=spec.true_mapping[t]))
        if spec.noise_rate > 0 and rng.random() < spec.noise_rate:
            others = [j for j in range(R) if j != r_true]
            label = others[int(rng.integers(len(others)))]
        else:
            label = r_true
        head, tail = take_pair(label)
        corpus.append((f"s{s}", head, tail, paths[t]))

    return SyntheticData(spec, paths, corpus, kb_facts, pair_labels)


def write_corpus_tsv(data: SyntheticData, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sid, head, tail, p in data.corpus:
            fh.write(f"{sid}\t{head}\t{tail}\t{p}\n")


def write_kb_tsv(facts: Sequence[tuple[str, str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for head, rel, tail in facts:
            fh.write(f"{head}\t{rel}\t{tail}\n")


def write_mapping_tsv(data: SyntheticData, path: str | Path) -> None:
    rows = []
    for i, p in enumerate(data.paths):
        for j in range(data.spec.num_kb_relations):
            prob = data.spec.true_mapping[i, j]
            if prob > 0:
                rows.append((p, relation_name(j), prob))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p, rel, prob in rows:
            fh.write(f"{p}\t{rel}\t{fmt_float(prob)}\n")


def read_mapping_tsv(path: str | Path) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, rel, prob = line.split("\t")
            out.setdefault(key, {})[rel] = float(prob)
    return out


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> dict[str, Path]:
    """Write corpus, KB and ground-truth mapping files; deterministic given
    the spec (same seed, byte-identical files)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = generate(spec)
    paths = {
        "corpus": out_dir / "corpus.tsv",
        "kb": out_dir / "kb.tsv",
        "mapping": out_dir / "mapping.tsv",
    }
    write_corpus_tsv(data, paths["corpus"])
    write_kb_tsv(data.kb_facts, paths["kb"])
    write_mapping_tsv(data, paths["mapping"])
    return paths


def generate_eval_bundle(
    spec: SyntheticSpec,
    out_dir: str | Path,
    *,
    holdout_fraction: float = 0.2,
    base_informative: float = 0.5,
    na_name: str = DEFAULT_NA_NAME,
) -> dict[str, Path]:
    """Full demo dataset: on top of the corpus/KB/mapping files, a fraction
    of the entity pairs' facts is held out of the training KB for
    evaluation, every corpus sentence doubles as a candidate context, and
    an external model's candidate scores are simulated (informative with
    probability ``base_informative``, otherwise pure noise)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = generate(spec)

    rng = np.random.default_rng(derive_seed(spec.seed, "holdout"))
    train_facts, holdout_facts = [], []
    for fact in data.kb_facts:
        if rng.random() < holdout_fraction:
            holdout_facts.append(fact)
        else:
            train_facts.append(fact)

    truth = set(data.kb_facts)
    names = [relation_name(j) for j in range(spec.num_kb_relations)] + [na_name]
    score_rng = np.random.default_rng(derive_seed(spec.seed, "base-scores"))
    base_rows = []
    for head, _, tail in data.kb_facts:  # one row group per pair, creation order
        for rel in names:
            u = score_rng.uniform()
            informative = score_rng.uniform() < base_informative
            is_true = (head, rel, tail) in truth
            if informative:
                e = 0.6 + 0.4 * u if is_true else 0.4 * u
            else:
                e = u
            base_rows.append((head, rel, tail, e))

    paths = {
        "corpus": out_dir / "corpus.tsv",
        "kb": out_dir / "kb.tsv",
        "mapping": out_dir / "mapping.tsv",
        "holdout_kb": out_dir / "holdout_kb.tsv",
        "contexts": out_dir / "contexts.tsv",
        "base_scores": out_dir / "base_scores.tsv",
    }
    write_corpus_tsv(data, paths["corpus"])
    write_kb_tsv(train_facts, paths["kb"])
    write_mapping_tsv(data, paths["mapping"])
    write_kb_tsv(holdout_facts, paths["holdout_kb"])
    with open(paths["contexts"], "w", encoding="utf-8", newline="\n") as fh:
        for sid, head, tail, p in data.corpus:
            fh.write(f"{head}\t{tail}\t{sid}\t{p}\n")
    with open(paths["base_scores"], "w", encoding="utf-8", newline="\n") as fh:
        for head, rel, tail, e in base_rows:
            fh.write(f"{head}\t{rel}\t{tail}\t{fmt_float(e)}\n")
    return paths
