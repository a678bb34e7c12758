import itertools
import math

import numpy as np
import pytest

from sceneqa.scene import ObjectFact, SceneFact, SpatialLoc
from sceneqa.worlds import (
    FactBatch,
    SegmentLabelDist,
    batch_of_facts,
    build_training_world,
    most_confident_world,
    sample_worlds,
    tfidf_select_batches,
    world_from_binding,
    world_log_prob,
)

from conftest import random_scene


def _loc():
    return SpatialLoc(0, 1, 0.5, 0, 1, 0.5, 0, 1, 0.5)


def _seg(sid, labels, image="image1"):
    return SegmentLabelDist(sid, image, "brown", _loc(), tuple(labels))


def test_segment_invariants():
    with pytest.raises(ValueError, match="no labels"):
        _seg("s0", [])
    with pytest.raises(ValueError, match="outside"):
        _seg("s0", [("table", 1.2), ("chair", -0.2)])
    with pytest.raises(ValueError, match="sum"):
        _seg("s0", [("table", 0.7), ("chair", 0.2)])


def test_most_confident_argmax():
    world = most_confident_world([_seg("s0", [("table", 0.9), ("chair", 0.1)])])
    assert [o.category for o in world.objects] == ["table"]
    assert world.log_weight == pytest.approx(math.log(0.9))


def test_most_confident_tie_takes_first_listed():
    world = most_confident_world([_seg("s0", [("table", 0.5), ("chair", 0.5)])])
    assert world.objects[0].category == "table"


def test_most_confident_matches_per_segment_argmax_oracle():
    scene = random_scene(21, n_segments=3)
    world = most_confident_world(scene)
    by_id = {o.instance_id: o.category for o in world.objects}
    for seg in scene:
        best = seg.labels[0]
        for cand in seg.labels[1:]:
            if cand[1] > best[1]:
                best = cand
        assert by_id[seg.segment_id] == best[0]


def test_world_log_prob_basics():
    scene = [_seg("s0", [("table", 1.0)]), _seg("s1", [("chair", 1.0)])]
    assert world_log_prob(scene, {"s0": "table", "s1": "chair"}) == 0.0
    scene = [
        _seg("s0", [("table", 0.5), ("chair", 0.5)]),
        _seg("s1", [("table", 0.5), ("chair", 0.5)]),
    ]
    assert world_log_prob(scene, {"s0": "table", "s1": "table"}) == pytest.approx(
        math.log(0.25)
    )
    zero = [_seg("s0", [("table", 0.0), ("chair", 1.0)])]
    assert world_log_prob(zero, {"s0": "table"}) == -math.inf
    with pytest.raises(ValueError, match="misses segment"):
        world_log_prob(zero, {})


def test_binding_probabilities_sum_to_one():
    scene = random_scene(33, n_segments=3, categories=("table", "chair"))
    total = 0.0
    for combo in itertools.product(("table", "chair"), repeat=3):
        binding = {f"s{j}": c for j, c in enumerate(combo)}
        total += math.exp(world_log_prob(scene, binding))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_sampling_degenerate_distribution():
    scene = [_seg("s0", [("table", 1.0)])]
    for world in sample_worlds(scene, 50, seed=0):
        assert world.objects[0].category == "table"
        assert world.log_weight == 0.0


def test_sampling_frequency_matches_probability():
    scene = [_seg("s0", [("table", 0.5), ("chair", 0.5)])]
    worlds = sample_worlds(scene, 10000, seed=42)
    freq = sum(w.objects[0].category == "table" for w in worlds) / 10000
    assert 0.47 <= freq <= 0.53  # 3-sigma binomial bound


def test_sampling_is_deterministic_and_order_independent():
    scene = random_scene(7, n_segments=4)
    a = sample_worlds(scene, 20, seed=9)
    b = sample_worlds(scene, 20, seed=9)
    assert [w.objects for w in a] == [w.objects for w in b]
    assert [w.log_weight for w in a] == [w.log_weight for w in b]
    # shuffling segment order leaves each segment's draws unchanged
    shuffled = sample_worlds(list(scene), 20, seed=9)
    assert [w.objects for w in shuffled] == [w.objects for w in a]


def test_most_confident_weight_dominates_samples():
    scene = random_scene(13, n_segments=4)
    top = most_confident_world(scene).log_weight
    for world in sample_worlds(scene, 200, seed=3):
        assert world.log_weight <= top + 1e-12


def test_sampled_worlds_carry_probability():
    scene = random_scene(29, n_segments=3)
    probs = {seg.segment_id: dict(seg.labels) for seg in scene}
    for world in sample_worlds(scene, 30, seed=5):
        want = sum(
            math.log(probs[o.instance_id][o.category]) for o in world.objects
        )
        assert world.log_weight == pytest.approx(want)


def test_world_from_binding_matches_log_prob():
    scene = random_scene(31, n_segments=2, categories=("table", "chair"))
    w = world_from_binding(scene, {"s0": "table", "s1": "chair"})
    assert w.log_weight == world_log_prob(scene, {"s0": "table", "s1": "chair"})
    assert {o.category for o in w.objects} == {"table", "chair"}


def test_tfidf_discriminative_term_ranks_first():
    corpus = [
        FactBatch("b1", frozenset({"table", "unique"})),
        FactBatch("b2", frozenset({"table", "chair"})),
        FactBatch("b3", frozenset({"sofa"})),
    ]
    query = FactBatch("q", frozenset({"table", "unique"}))
    assert tfidf_select_batches(query, corpus, 2)[0] == "b1"


def test_tfidf_ubiquitous_term_contributes_nothing():
    # "table" is in every batch, so idf=ln(1)=0 and only "lamp" discriminates
    corpus = [
        FactBatch("b1", frozenset({"table", "lamp"})),
        FactBatch("b2", frozenset({"table"})),
        FactBatch("b3", frozenset({"table"})),
    ]
    ranked = tfidf_select_batches(FactBatch("q", frozenset({"table", "lamp"})), corpus, 3)
    assert ranked[0] == "b1"
    # the remaining two have zero-norm vectors: similarity 0, tie by id
    assert ranked[1:] == ["b2", "b3"]


def test_tfidf_matches_cosine_oracle():
    corpus = [
        FactBatch("b1", frozenset({"table", "chair", "red"})),
        FactBatch("b2", frozenset({"table", "sofa"})),
        FactBatch("b3", frozenset({"lamp", "red", "blue"})),
        FactBatch("b4", frozenset({"sofa", "blue"})),
    ]
    query = FactBatch("q", frozenset({"table", "red", "blue"}))
    vocab = sorted({t for b in corpus for t in b.term_set})
    df = {t: sum(t in b.term_set for b in corpus) for t in vocab}
    idf = {t: math.log(len(corpus) / df[t]) for t in vocab}

    def vec(terms):
        return np.array([idf[t] if t in terms else 0.0 for t in vocab])

    qv = vec(query.term_set)
    sims = {}
    for b in corpus:
        bv = vec(b.term_set)
        denom = np.linalg.norm(qv) * np.linalg.norm(bv)
        sims[b.batch_id] = float(qv @ bv / denom) if denom else 0.0
    want = sorted(sims, key=lambda bid: (-sims[bid], bid))
    assert tfidf_select_batches(query, corpus, 4) == want


def test_tfidf_invariant_to_corpus_order():
    corpus = [
        FactBatch("b1", frozenset({"table", "chair"})),
        FactBatch("b2", frozenset({"table", "sofa"})),
        FactBatch("b3", frozenset({"chair", "sofa"})),
    ]
    query = FactBatch("q", frozenset({"chair"}))
    assert tfidf_select_batches(query, corpus, 3) == tfidf_select_batches(
        query, corpus[::-1], 3
    )


def test_tfidf_degenerate_query_and_large_k():
    corpus = [FactBatch("b2", frozenset({"x"})), FactBatch("b1", frozenset({"y"}))]
    assert tfidf_select_batches(FactBatch("q", frozenset()), corpus, 1) == ["b1"]
    assert len(tfidf_select_batches(FactBatch("q", frozenset({"x"})), corpus, 10)) == 2


def test_batch_of_facts_terms():
    objects = [ObjectFact("table", "1", "image1", "brown", _loc())]
    scenes = [SceneFact("image1", "kitchen")]
    assert batch_of_facts("image1", objects, scenes).term_set == {
        "table",
        "brown",
        "kitchen",
    }


def test_build_training_world_union():
    o1 = ObjectFact("table", "1", "imageA", "brown", _loc())
    o2 = ObjectFact("chair", "2", "imageA", "red", _loc())
    one = build_training_world([([o1, o2], ())])
    assert set(one.objects) == {o1, o2}

    batch_b = [
        ObjectFact("sofa", str(i), "imageB", "red", _loc()) for i in range(3, 7)
    ]
    disjoint = build_training_world([([o1, o2], ()), (batch_b, ())])
    assert len(disjoint.objects) == 6

    # identical facts across batches collapse (set union); a reused id with a
    # different fact is re-keyed
    clash = ObjectFact("lamp", "1", "imageC", "white", _loc())
    merged = build_training_world([([o1], ()), ([o1, clash], ())])
    assert len(merged.objects) == 2
    assert {o.category for o in merged.objects} == {"table", "lamp"}
    assert {o.instance_id for o in merged.objects} == {"1", "1~2"}


def test_build_training_world_matches_set_union_oracle():
    base = [ObjectFact("table", str(i), "imageA", "brown", _loc()) for i in range(5)]
    batches = [(base[:3], ()), (base[1:4], ()), (base[2:], ())]
    merged = build_training_world(batches)
    assert set(merged.objects) == set(base)
    assert merged.log_weight == 0.0
