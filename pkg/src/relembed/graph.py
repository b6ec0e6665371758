"""Bipartite co-occurrence graph between dependency-path relations and KB relations.

A *textual relation* is a tokenized lexicalized dependency path.  Its
corpus support is a multiset of entity pairs; a KB relation's support is
the set of entity pairs holding it in the KB.  The co-occurrence count of
a (textual, KB) pair is the total corpus multiplicity of the textual
relation over the KB relation's support.  Counts are normalized per
textual relation into a conditional distribution (or, for comparison
experiments, PPMI weights).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from math import log
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import DataError, ParseError
from .util import derive_seed, fmt_float

EntityPair = tuple[str, str]

DEFAULT_NA_NAME = "NA"


class Direction(Enum):
    LEFT = "left"
    RIGHT = "right"
    NONE = "none"


class TokenKind(Enum):
    WORD = "word"
    DEP = "dep"


@dataclass(frozen=True)
class Token:
    """One path element: a lexical word or a directed dependency relation."""

    kind: TokenKind
    text: str
    direction: Direction = Direction.NONE

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        if any(ch.isspace() for ch in self.text):
            raise ValueError(f"token text may not contain whitespace: {self.text!r}")
        if self.kind is TokenKind.DEP:
            if self.direction is Direction.NONE:
                raise ValueError("dependency tokens carry Left or Right direction")
            # Keep the serialized form unambiguous so canonical keys round-trip.
            if self.direction is Direction.LEFT and self.text.endswith("->"):
                raise ValueError(f"left dependency label may not end with '->': {self.text!r}")
            if self.direction is Direction.RIGHT and self.text.startswith("<-"):
                raise ValueError(f"right dependency label may not start with '<-': {self.text!r}")
        else:
            if self.direction is not Direction.NONE:
                raise ValueError("lexical tokens carry no direction")
            if self.text.startswith("<-") or self.text.endswith("->"):
                raise ValueError(f"lexical token would parse as a dependency: {self.text!r}")

    def canonical(self) -> str:
        if self.kind is TokenKind.WORD:
            return self.text
        if self.direction is Direction.LEFT:
            return "<-" + self.text
        return self.text + "->"


def word(text: str) -> Token:
    return Token(TokenKind.WORD, text)


def dep(label: str, direction: Direction) -> Token:
    return Token(TokenKind.DEP, label, direction)


@dataclass(frozen=True)
class TextualRelation:
    """A tokenized dependency path between two entities."""

    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a textual relation needs at least one token")

    @cached_property
    def canonical_key(self) -> str:
        return " ".join(t.canonical() for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


_TOKEN_RE = re.compile(rb"\S+")


def tokenize_textual_relation(path_text: str) -> TextualRelation:
    """Parse a serialized dependency path.

    Grammar: whitespace-separated tokens; ``<-label`` is a left-directed
    dependency, ``label->`` a right-directed one, anything else a lexical
    word.  Raises :class:`ParseError` naming the byte offset for an empty
    path or a malformed direction marker.
    """
    raw = path_text.encode("utf-8")
    tokens: list[Token] = []
    for m in _TOKEN_RE.finditer(raw):
        piece = m.group().decode("utf-8")
        offset = m.start()
        left = piece.startswith("<-")
        right = piece.endswith("->")
        if left and right:
            raise ParseError(f"token {piece!r} carries both direction markers", offset)
        if left:
            label = piece[2:]
            if not label:
                raise ParseError("left direction marker with empty label", offset)
            tokens.append(dep(label, Direction.LEFT))
        elif right:
            label = piece[:-2]
            if not label:
                raise ParseError("right direction marker with empty label", offset)
            tokens.append(dep(label, Direction.RIGHT))
        else:
            tokens.append(word(piece))
    if not tokens:
        raise ParseError("empty dependency path", 0)
    return TextualRelation(tuple(tokens))


@dataclass(frozen=True)
class KBRelation:
    name: str
    is_na: bool = False


@dataclass
class RelationGraph:
    """Weighted bipartite graph: textual relations x KB relations.

    ``counts[i]`` maps a KB-relation column index to the raw co-occurrence
    count (always > 0; absent means no edge).  ``weights`` mirrors the
    structure after normalization.  Textual nodes are sorted by canonical
    key and KB nodes by name, so edge iteration order is deterministic.
    """

    textual: list[TextualRelation]
    kb: list[KBRelation]
    counts: list[dict[int, int]]
    weights: list[dict[int, float]] | None = None

    textual_index: dict[str, int] = field(init=False, repr=False)
    kb_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.textual_index = {t.canonical_key: i for i, t in enumerate(self.textual)}
        self.kb_index = {r.name: j for j, r in enumerate(self.kb)}

    @property
    def kb_names(self) -> list[str]:
        return [r.name for r in self.kb]

    @property
    def num_edges(self) -> int:
        return sum(len(row) for row in self.counts)

    def edges(self) -> Iterator[tuple[int, int]]:
        """Edges in deterministic row-major order."""
        for i, row in enumerate(self.counts):
            for j in sorted(row):
                yield i, j

    def row_sum(self, i: int) -> int:
        return sum(self.counts[i].values())

    def weight(self, i: int, j: int) -> float:
        if self.weights is None:
            raise DataError("graph has no weights; normalize it first")
        return self.weights[i][j]


class GraphBuilder:
    """Accumulates corpus occurrences and KB facts, then counts co-occurrences.

    One builder is single-writer; independent builders over corpus shards
    can be combined with :meth:`absorb` (count addition is associative and
    commutative).  With ``allow_duplicates=False`` a repeated
    (sentence_id, head, tail, path) submission is rejected.
    """

    def __init__(
        self,
        *,
        allow_duplicates: bool = True,
        count_na_pairs: bool = True,
        na_name: str = DEFAULT_NA_NAME,
    ):
        self.allow_duplicates = allow_duplicates
        self.count_na_pairs = count_na_pairs
        self.na_name = na_name
        self._occurrences: dict[TextualRelation, Counter[EntityPair]] = {}
        self._kb: dict[str, set[EntityPair]] = {}
        self._seen: set[tuple[str, str, str, str]] = set()

    def accumulate_fact(self, head: str, tail: str, relation: TextualRelation, sentence_id: str) -> None:
        if not self.allow_duplicates:
            key = (sentence_id, head, tail, relation.canonical_key)
            if key in self._seen:
                raise DataError(
                    f"duplicate sentence record {sentence_id!r} for "
                    f"({head!r}, {relation.canonical_key!r}, {tail!r})"
                )
            self._seen.add(key)
        self._occurrences.setdefault(relation, Counter())[(head, tail)] += 1

    def register_kb_fact(self, head: str, tail: str, relation_name: str) -> None:
        self._kb.setdefault(relation_name, set()).add((head, tail))

    def absorb(self, other: "GraphBuilder") -> None:
        """Merge another shard's accumulation into this builder."""
        if not self.allow_duplicates:
            clash = self._seen & other._seen
            if clash:
                raise DataError(f"duplicate sentence records across shards: {sorted(clash)[:3]}")
            self._seen |= other._seen
        for rel, support in other._occurrences.items():
            self._occurrences.setdefault(rel, Counter()).update(support)
        for name, pairs in other._kb.items():
            self._kb.setdefault(name, set()).update(pairs)

    def build_counts(self, min_row_sum: int = 1) -> RelationGraph:
        """Count co-occurrences: each corpus occurrence of (e, t, e') counts
        once toward every KB relation holding (e, e'); pairs with no KB
        relation count toward NA when ``count_na_pairs`` is set.

        Rows whose total count falls below ``min_row_sum`` are dropped
        before normalization ever sees them.
        """
        pair_relations: dict[EntityPair, list[str]] = {}
        for name, pairs in self._kb.items():
            for pair in pairs:
                pair_relations.setdefault(pair, []).append(name)

        names = set(self._kb)
        if self.count_na_pairs:
            names.add(self.na_name)
        kb = [KBRelation(name, is_na=(name == self.na_name)) for name in sorted(names)]
        kb_index = {r.name: j for j, r in enumerate(kb)}

        textual = sorted(self._occurrences, key=lambda t: t.canonical_key)
        kept: list[TextualRelation] = []
        counts: list[dict[int, int]] = []
        for rel in textual:
            row: dict[int, int] = {}
            for pair, mult in self._occurrences[rel].items():
                matched = pair_relations.get(pair)
                if matched:
                    for name in matched:
                        j = kb_index[name]
                        row[j] = row.get(j, 0) + mult
                elif self.count_na_pairs:
                    j = kb_index[self.na_name]
                    row[j] = row.get(j, 0) + mult
            if sum(row.values()) >= min_row_sum:
                kept.append(rel)
                counts.append(row)
        return RelationGraph(textual=kept, kb=kb, counts=counts)


def graph_from_counts(
    rows: Mapping[str, Mapping[str, int]], na_name: str = DEFAULT_NA_NAME
) -> RelationGraph:
    """Build a graph directly from {path_text: {relation_name: count}}."""
    relations = {tokenize_textual_relation(text): row for text, row in rows.items()}
    names = sorted({name for row in rows.values() for name in row})
    kb = [KBRelation(name, is_na=(name == na_name)) for name in names]
    kb_index = {r.name: j for j, r in enumerate(kb)}
    textual = sorted(relations, key=lambda t: t.canonical_key)
    counts = []
    for rel in textual:
        row = {kb_index[name]: int(n) for name, n in relations[rel].items() if n}
        counts.append(row)
    return RelationGraph(textual=textual, kb=kb, counts=counts)


def normalize_conditional(graph: RelationGraph) -> RelationGraph:
    """Turn each row of counts into a probability distribution over KB relations."""
    weights: list[dict[int, float]] = []
    for i, row in enumerate(graph.counts):
        total = sum(row.values())
        if total <= 0:
            raise DataError(
                f"textual relation {graph.textual[i].canonical_key!r} has no "
                "co-occurrences; prune zero rows before normalizing"
            )
        weights.append({j: n / total for j, n in row.items()})
    return RelationGraph(textual=graph.textual, kb=graph.kb, counts=graph.counts, weights=weights)


def normalize_ppmi(graph: RelationGraph, alpha: float | None = 0.75) -> RelationGraph:
    """Positive pointwise mutual information weights, optionally smoothing
    the column marginal with exponent ``alpha`` (``None`` means 1, i.e.
    plain PPMI).  Kept for comparison experiments; conditional
    normalization is the production scheme.
    """
    a = 1.0 if alpha is None else float(alpha)
    total = sum(n for row in graph.counts for n in row.values())
    if total <= 0:
        raise DataError("graph has no edges")
    row_sums = [sum(row.values()) for row in graph.counts]
    col_sums: dict[int, int] = {}
    for row in graph.counts:
        for j, n in row.items():
            col_sums[j] = col_sums.get(j, 0) + n
    col_mass = {j: c**a for j, c in col_sums.items()}
    col_norm = sum(col_mass.values())
    weights: list[dict[int, float]] = []
    for i, row in enumerate(graph.counts):
        p_i = row_sums[i] / total
        w: dict[int, float] = {}
        for j, n in row.items():
            p_ij = n / total
            p_j = col_mass[j] / col_norm
            w[j] = max(0.0, log(p_ij / (p_i * p_j)))
        weights.append(w)
    return RelationGraph(textual=graph.textual, kb=graph.kb, counts=graph.counts, weights=weights)


def split_edges(
    graph: RelationGraph, train_size: int, val_size: int, seed: int
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Sample training and validation edge lists.

    Each list is a uniform sample without replacement from the full edge
    set; the two lists are drawn independently and may overlap each other.
    """
    edges = list(graph.edges())
    n = len(edges)
    if train_size > n or val_size > n:
        raise DataError(f"requested split {train_size}/{val_size} exceeds {n} edges")
    rng_train = np.random.default_rng(derive_seed(seed, "edge-split-train"))
    rng_val = np.random.default_rng(derive_seed(seed, "edge-split-val"))
    train_idx = rng_train.choice(n, size=train_size, replace=False)
    val_idx = rng_val.choice(n, size=val_size, replace=False)
    return [edges[k] for k in train_idx], [edges[k] for k in val_idx]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def read_corpus_facts(path: str | Path) -> Iterator[tuple[str, str, str, TextualRelation]]:
    """Yield (sentence_id, head, tail, relation) from a corpus facts TSV."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            sentence_id, head, tail, path_text = parts
            try:
                relation = tokenize_textual_relation(path_text)
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}", exc.offset) from exc
            yield sentence_id, head, tail, relation


def read_kb_facts(path: str | Path) -> Iterator[tuple[str, str, str]]:
    """Yield (head, relation_name, tail) from a KB facts TSV."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            yield parts[0], parts[1], parts[2]


def build_graph_from_files(
    corpus_path: str | Path,
    kb_path: str | Path,
    *,
    allow_duplicates: bool = True,
    count_na_pairs: bool = True,
    na_name: str = DEFAULT_NA_NAME,
    min_row_sum: int = 1,
) -> RelationGraph:
    builder = GraphBuilder(
        allow_duplicates=allow_duplicates, count_na_pairs=count_na_pairs, na_name=na_name
    )
    for sentence_id, head, tail, relation in read_corpus_facts(corpus_path):
        builder.accumulate_fact(head, tail, relation, sentence_id)
    for head, name, tail in read_kb_facts(kb_path):
        builder.register_kb_fact(head, tail, name)
    return builder.build_counts(min_row_sum=min_row_sum)


def write_graph_tsv(graph: RelationGraph, path: str | Path) -> None:
    """Serialize edges as (canonical_key, relation, count, weight), sorted
    by (canonical_key, relation) for byte-stable output.  The weight field
    is empty when the graph has not been normalized.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, j in graph.edges():
            w = "" if graph.weights is None else fmt_float(graph.weights[i][j])
            fh.write(
                f"{graph.textual[i].canonical_key}\t{graph.kb[j].name}\t{graph.counts[i][j]}\t{w}\n"
            )


def read_graph_tsv(path: str | Path, na_name: str = DEFAULT_NA_NAME) -> RelationGraph:
    rows: dict[str, dict[str, int]] = {}
    weight_rows: dict[str, dict[str, float]] = {}
    has_weights = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            key, name, count, weight = parts
            rows.setdefault(key, {})[name] = int(count)
            if weight:
                has_weights = True
                weight_rows.setdefault(key, {})[name] = float(weight)
    graph = graph_from_counts(rows, na_name=na_name)
    if has_weights:
        weights: list[dict[int, float]] = []
        for rel in graph.textual:
            wrow = weight_rows.get(rel.canonical_key, {})
            weights.append({graph.kb_index[name]: w for name, w in wrow.items()})
        graph.weights = weights
    return graph
