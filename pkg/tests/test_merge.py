import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relembed.errors import DataError
from relembed.graph import KBRelation, tokenize_textual_relation
from relembed.merge import (
    Candidate,
    MergeExample,
    MergeModel,
    aggregate,
    aggregate_max,
    aggregate_mean,
    build_merge_examples,
    combine,
    hinge_gradients,
    hinge_loss,
    negative_sample,
    rank_candidates,
    read_merged_tsv,
    sentence_scores,
    train_merge,
    write_merged_tsv,
)
from relembed.model import EmbeddingModel, Vocabulary


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def test_aggregate_cap_binds():
    assert aggregate([0.4, 0.5], cap=0.7) == pytest.approx(0.7)


def test_aggregate_sum_below_cap():
    assert aggregate([0.2, 0.3], cap=1.0) == pytest.approx(0.5)


def test_aggregate_empty_set_is_zero():
    assert aggregate([], cap=0.9) == 0.0


def test_aggregate_rejects_negative_cap():
    with pytest.raises(DataError):
        aggregate([0.1], cap=-1.0)


@given(
    st.lists(st.floats(0, 1), max_size=8),
    st.floats(0, 5),
    st.floats(0, 1),
)
def test_aggregate_monotone_in_scores_and_cap(gs, cap, bump):
    base = aggregate(gs, cap)
    assert aggregate(gs + [bump], cap) >= base
    assert aggregate(gs, cap + bump) >= base
    assert aggregate(gs, 1e9) == pytest.approx(sum(gs))


def test_baseline_aggregators():
    assert aggregate_max([0.2, 0.9, 0.5]) == 0.9
    assert aggregate_max([]) == 0.0
    assert aggregate_mean([0.2, 0.4]) == pytest.approx(0.3)
    assert aggregate_mean([]) == 0.0


# ---------------------------------------------------------------------------
# Combination
# ---------------------------------------------------------------------------

def test_combine_identity_on_external_score():
    assert combine(MergeModel(w1=1, w2=0), 0.42, 0.9) == pytest.approx(0.42)


def test_combine_identity_on_aggregate():
    assert combine(MergeModel(w1=0, w2=1), 0.42, 0.7) == pytest.approx(0.7)


def test_combine_arithmetic():
    assert combine(MergeModel(w1=2, w2=3), 0.1, 0.2) == pytest.approx(0.8)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2))
def test_combine_additive_in_each_argument(w1, w2, e1, e2, g):
    mm = MergeModel(w1=w1, w2=w2, cap=1.0)
    assert combine(mm, e1 + e2, g) == pytest.approx(
        combine(mm, e1, g) + combine(mm, e2, g) - combine(mm, 0.0, g)
    )
    assert combine(mm, e1, g) + combine(mm, e1, g) == pytest.approx(combine(mm, 2 * e1, 2 * g) + combine(mm, 0, 0))


# ---------------------------------------------------------------------------
# Hinge loss
# ---------------------------------------------------------------------------

def ex(pos_e, neg_es):
    return MergeExample(pos_e, 0.0, tuple(neg_es), tuple(0.0 for _ in neg_es))


W1_ONLY = MergeModel(w1=1.0, w2=0.0, cap=0.0)


def test_hinge_zero_when_margin_met_exactly():
    examples = [ex(1.0, [0.0]), ex(2.0, [1.0, 1.0])]
    assert hinge_loss(W1_ONLY, examples) == 0.0


def test_hinge_one_when_scores_equal():
    assert hinge_loss(W1_ONLY, [ex(0.5, [0.5])]) == pytest.approx(1.0)


def test_hinge_arithmetic_case():
    assert hinge_loss(W1_ONLY, [ex(0.2, [0.5])]) == pytest.approx(1.3)


def test_hinge_example_requires_negatives():
    with pytest.raises(DataError):
        MergeExample(1.0, 0.0, (), ())


@given(
    st.lists(
        st.tuples(st.floats(-3, 3), st.lists(st.floats(-3, 3), min_size=1, max_size=4)),
        min_size=1,
        max_size=6,
    )
)
def test_hinge_nonnegative_and_zero_iff_margins_met(data):
    examples = [ex(p, ns) for p, ns in data]
    loss = hinge_loss(W1_ONLY, examples)
    assert loss >= 0.0
    margins_met = all(p - n >= 1.0 for p, ns in data for n in ns)
    assert (loss == 0.0) == margins_met


def test_ranking_invariant_under_constant_shift():
    mm = MergeModel(w1=1.0, w2=0.5, cap=1.0)
    scored = {
        Candidate("a", "r1", "b"): (0.9, 0.4),
        Candidate("c", "r2", "d"): (0.5, 1.8),
        Candidate("e", "r1", "f"): (0.1, 0.2),
    }
    base = [c.fact for c, *_ in rank_candidates(scored, mm)]
    shifted = {c: (e + 3.0, g) for c, (e, g) in scored.items()}  # adds w1*3 to every blended score
    after = [c.fact for c, *_ in rank_candidates(shifted, mm)]
    assert base == after


# ---------------------------------------------------------------------------
# Merge training
# ---------------------------------------------------------------------------

def test_hinge_gradient_matches_finite_difference():
    rng = np.random.default_rng(4)
    examples = [
        MergeExample(
            rng.uniform(0, 1),
            rng.uniform(0, 2),
            tuple(rng.uniform(0, 1, size=3)),
            tuple(rng.uniform(0, 2, size=3)),
        )
        for _ in range(20)
    ]
    mm = MergeModel(w1=0.8, w2=1.3, cap=0.9)
    d1, d2, dcap = hinge_gradients(mm, examples)
    h = 1e-7
    for attr, analytic in (("w1", d1), ("w2", d2), ("cap", dcap)):
        up = MergeModel(**{**mm.__dict__, attr: getattr(mm, attr) + h})
        down = MergeModel(**{**mm.__dict__, attr: getattr(mm, attr) - h})
        numeric = (hinge_loss(up, examples) - hinge_loss(down, examples)) / (2 * h)
        assert analytic == pytest.approx(numeric, abs=1e-6)


def _separable_examples(seed, n=80):
    """G separates positives from negatives perfectly; E is pure noise."""
    rng = np.random.default_rng(seed)
    examples = []
    for _ in range(n):
        examples.append(
            MergeExample(
                pos_e=rng.uniform(0, 1),
                pos_gsum=rng.uniform(1.5, 2.5),
                neg_e=tuple(rng.uniform(0, 1, size=3)),
                neg_gsum=tuple(rng.uniform(0.0, 0.3, size=3)),
            )
        )
    return examples


def test_train_merge_learns_to_trust_informative_signal():
    examples = _separable_examples(0)
    init = MergeModel()
    trained = train_merge(examples, init=init, lr=0.05, epochs=300, seed=1)
    assert hinge_loss(trained, examples) < hinge_loss(init, examples)
    assert abs(trained.w2) > abs(trained.w1)
    assert trained.cap >= 0.0


def test_train_merge_zero_lr_keeps_parameters():
    examples = _separable_examples(1)
    init = MergeModel(w1=0.3, w2=0.4, cap=0.5)
    trained = train_merge(examples, init=init, lr=0.0, epochs=50, seed=0)
    assert (trained.w1, trained.w2, trained.cap) == (0.3, 0.4, 0.5)


def test_train_merge_deterministic_given_seed():
    examples = _separable_examples(2)
    a = train_merge(examples, lr=0.03, epochs=100, seed=9)
    b = train_merge(examples, lr=0.03, epochs=100, seed=9)
    assert (a.w1, a.w2, a.cap) == (b.w1, b.w2, b.cap)


# ---------------------------------------------------------------------------
# Negative sampling
# ---------------------------------------------------------------------------

def test_negative_sample_subset_of_other_relations():
    kb = [("e", "r1", "ep")]
    negs = negative_sample(kb, ["r1", "r2", "r3"], k=2, seed=0)
    assert negs == [["r2", "r3"]] or negs == [["r3", "r2"]]


def test_negative_sample_excludes_known_facts():
    kb = [("e", "r1", "ep"), ("e", "r2", "ep")]
    negs = negative_sample([("e", "r1", "ep")], ["r1", "r2", "r3"], k=1, seed=3)
    # r2 is itself a KB fact for this pair, so r3 is forced
    assert negative_sample(kb, ["r1", "r2", "r3"], k=1, seed=3)[0] == ["r3"]


def test_negative_sample_deterministic():
    kb = [("a", "r1", "b"), ("c", "r4", "d")]
    pool = [f"r{i}" for i in range(8)]
    assert negative_sample(kb, pool, 3, seed=5) == negative_sample(kb, pool, 3, seed=5)


def test_negative_sample_insufficient_pool():
    with pytest.raises(DataError):
        negative_sample([("e", "r1", "ep")], ["r1", "r2"], k=2, seed=0)


# ---------------------------------------------------------------------------
# Sentence scoring and serialization
# ---------------------------------------------------------------------------

def _uniform_model(R=4):
    vocab = Vocabulary(["<-nsubjpass", "born", "nmod:in->"])
    kb = [KBRelation(f"r{j}") for j in range(R)]
    m = EmbeddingModel.create(vocab, kb, 4, 4, seed=0)
    for k in m.params:
        m.params[k][:] = 0.0
    return m


def test_sentence_scores_empty_contexts():
    m = _uniform_model()
    assert sentence_scores(m, Candidate("a", "r0", "b"), []) == []


def test_sentence_scores_uniform_model():
    m = _uniform_model(R=4)
    path = tokenize_textual_relation("<-nsubjpass born nmod:in->")
    scores = sentence_scores(m, Candidate("a", "r2", "b"), [("s1", path), ("s2", path)])
    assert [s.g for s in scores] == pytest.approx([0.25, 0.25])
    assert scores[0].sentence_id == "s1"


def test_merged_tsv_round_trip_sorted(tmp_path):
    mm = MergeModel(w1=1.0, w2=1.0, cap=1.0)
    scored = {
        Candidate("b", "r1", "x"): (0.5, 0.2),
        Candidate("a", "r1", "x"): (0.5, 0.2),  # tie with above; lexicographic order
        Candidate("c", "NA", "x"): (0.9, 2.0),  # excluded
        Candidate("d", "r2", "y"): (0.9, 0.6),
    }
    rows = rank_candidates(scored, mm)
    assert [r[0].head for r in rows] == ["d", "a", "b"]
    path = tmp_path / "merged.tsv"
    write_merged_tsv(rows, path)
    again = read_merged_tsv(path)
    assert [(c.fact, e, g, s) for c, e, g, s in again] == [
        (c.fact, e, g, s) for c, e, g, s in rows
    ]


def test_build_merge_examples_defaults_missing_candidates():
    scored = {Candidate("a", "r1", "b"): (0.7, 1.2)}
    examples = build_merge_examples(scored, [("a", "r1", "b")], [["r2", "r3"]])
    assert examples == [MergeExample(0.7, 1.2, (0.0, 0.0), (0.0, 0.0))]
