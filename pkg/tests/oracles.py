"""Independent brute-force oracles used by the test suite.

These deliberately avoid the library's data structures and algorithms:
counting is a double loop over (sentence occurrence, KB fact) pairs, and
ranking metrics are recomputed from scratch per prefix.  They stay dumb
so they can arbitrate.
"""

from collections import defaultdict


def brute_force_counts(records, kb_facts, *, count_na_pairs=True, na_name="NA"):
    """Co-occurrence counts by explicit enumeration.

    records: iterable of (sentence_id, head, tail, path_key)
    kb_facts: iterable of (head, relation_name, tail); duplicates ignored.
    Returns {(path_key, relation_name): count}.
    """
    facts = set(kb_facts)
    counts = defaultdict(int)
    for _, head, tail, path_key in records:
        matched = False
        for fh, name, ft in facts:
            if (head, tail) == (fh, ft):
                counts[(path_key, name)] += 1
                matched = True
        if not matched and count_na_pairs:
            counts[(path_key, na_name)] += 1
    return dict(counts)


def brute_force_pr_points(labels, total_positives):
    """(recall, precision) per prefix, recomputed from scratch each time."""
    points = []
    for k in range(1, len(labels) + 1):
        tp = sum(1 for flag in labels[:k] if flag)
        points.append((tp / total_positives, tp / k))
    return points


def brute_force_precision_at(labels, n):
    return sum(1 for flag in labels[:n] if flag) / n
