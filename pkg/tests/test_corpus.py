import logging
import math

import numpy as np
import pytest

from sceneqa import dcs
from sceneqa.corpus import (
    DEFAULT_TEMPLATES,
    CorpusError,
    QAPair,
    answer_stats,
    generate_synthetic_qa,
    load_answers,
    load_facts,
    load_qa,
    load_scenes,
    load_segmentations,
    template_tree,
    test_counts,
    train_counts,
    write_answers,
    write_facts,
    write_qa,
    write_scenes,
    write_segmentations,
)
from sceneqa.scene import ObjectFact, SceneFact, SpatialLoc, World

from conftest import ROOM_TYPES_22, random_loc, random_scene, random_world


def test_facts_roundtrip(tmp_path):
    world = random_world(1, n_images=5, max_objects_per_image=10)
    assert len(world.objects) >= 20
    path = tmp_path / "facts.tsv"
    write_facts(path, world.objects)
    loaded = load_facts(path)
    assert [o for img in loaded.images for o in loaded.objects_by_image[img]] == list(
        world.objects
    )
    assert loaded.world().objects == world.objects


def test_facts_roundtrip_with_log_weight(tmp_path):
    world = random_world(2, n_images=1)
    path = tmp_path / "w.tsv"
    write_facts(path, world.objects, log_weight=-1.25)
    assert load_facts(path).log_weight == -1.25


def test_facts_single_line(tmp_path):
    path = tmp_path / "facts.tsv"
    path.write_text("image1\to1\ttable\tbrown\t0\t1\t0.5\t0\t2\t1\t0\t3\t1.5\n")
    corpus = load_facts(path)
    (fact,) = corpus.objects_by_image["image1"]
    assert fact == ObjectFact(
        "table", "o1", "image1", "brown", SpatialLoc(0, 1, 0.5, 0, 2, 1, 0, 3, 1.5)
    )


def test_facts_empty_file(tmp_path):
    path = tmp_path / "facts.tsv"
    path.write_text("")
    assert load_facts(path).images == []


def test_facts_malformed_line_reports_lineno(tmp_path):
    path = tmp_path / "facts.tsv"
    path.write_text("image1\to1\ttable\tbrown\t0\t1\t0.5\n")
    with pytest.raises(CorpusError, match="facts.tsv:1"):
        load_facts(path)


def test_facts_unknown_color_warns_but_keeps(tmp_path, caplog):
    path = tmp_path / "facts.tsv"
    path.write_text("image1\to1\ttable\tmauve\t0\t1\t0.5\t0\t2\t1\t0\t3\t1.5\n")
    with caplog.at_level(logging.WARNING):
        corpus = load_facts(path)
    assert "mauve" in caplog.text
    assert corpus.objects_by_image["image1"][0].color == "mauve"


def test_facts_duplicate_id_errors(tmp_path):
    path = tmp_path / "facts.tsv"
    line = "image1\to1\ttable\tbrown\t0\t1\t0.5\t0\t2\t1\t0\t3\t1.5\n"
    path.write_text(line + line)
    with pytest.raises(CorpusError, match="duplicate instance id"):
        load_facts(path)


def test_scenes_roundtrip(tmp_path):
    scenes = [SceneFact("image1", "kitchen"), SceneFact("image2", "bedroom")]
    path = tmp_path / "scenes.tsv"
    write_scenes(path, scenes)
    assert sorted(load_scenes(path).values(), key=lambda s: s.image_id) == scenes


def test_segmentations_roundtrip(tmp_path):
    scene = random_scene(3, n_segments=6)
    path = tmp_path / "seg.tsv"
    write_segmentations(path, scene)
    assert load_segmentations(path) == sorted(
        scene, key=lambda s: (s.image_id, s.segment_id)
    )


def test_segmentations_parsing_rules(tmp_path):
    path = tmp_path / "seg.tsv"
    loc = "0\t1\t0.5\t0\t1\t0.5\t0\t1\t0.5"
    path.write_text(f"image1\ts0\tbrown\t{loc}\ttable:0.9,chair:0.1\n")
    (seg,) = load_segmentations(path)
    assert seg.labels == (("table", 0.9), ("chair", 0.1))

    path.write_text(f"image1\ts0\tbrown\t{loc}\ttable:0.5,chair:0.5005\n")
    (seg,) = load_segmentations(path)
    assert sum(p for _, p in seg.labels) == pytest.approx(1.0, abs=1e-9)

    path.write_text(f"image1\ts0\tbrown\t{loc}\ttable:0.5,chair:0.6\n")
    with pytest.raises(CorpusError, match="sum"):
        load_segmentations(path)

    path.write_text(f"image1\ts0\tbrown\t{loc}\ttable:1.5,chair:-0.5\n")
    with pytest.raises(CorpusError, match="negative"):
        load_segmentations(path)


def test_qa_parsing(tmp_path):
    path = tmp_path / "qa.txt"
    path.write_text("how many chairs are in image3 ?\n2\nwhat is on the desk?\nknife, fork\n")
    pairs = load_qa(path)
    assert pairs[0] == QAPair("how many chairs are in image3 ?", frozenset({"2"}), "image3")
    assert pairs[1].gold == frozenset({"knife", "fork"})
    assert pairs[1].scope is None


def test_qa_odd_lines_error(tmp_path):
    path = tmp_path / "qa.txt"
    path.write_text("how many chairs?\n")
    with pytest.raises(CorpusError, match="odd"):
        load_qa(path)


def test_qa_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    terms = ["table", "chair", "3", "0", "red bag"]
    pairs = []
    for i in range(50):
        gold = frozenset(
            terms[int(rng.integers(len(terms)))] for _ in range(int(rng.integers(1, 3)))
        )
        pairs.append(QAPair(f"question {i} about image{i}?", gold, f"image{i}"))
    path = tmp_path / "qa.txt"
    write_qa(path, pairs)
    assert load_qa(path) == pairs


def test_answers_roundtrip(tmp_path):
    answers = [frozenset({"table"}), frozenset(), frozenset({"a", "b"})]
    path = tmp_path / "answers.txt"
    write_answers(path, answers)
    assert load_answers(path) == answers


def test_counting_template_example():
    loc = SpatialLoc(0, 1, 0.5, 0, 1, 0.5, 0, 1, 0.5)
    world = World(
        [ObjectFact("cabinet", f"c{i}", "image1", "brown", loc) for i in range(3)]
    )
    tree = template_tree("counting", {"category": "cabinet", "image_id": "image1"})
    assert dcs.denote_answer(tree, world) == {"3"}


def test_negation_template_example():
    loc = SpatialLoc(0, 1, 0.5, 0, 1, 0.5, 0, 1, 0.5)
    world = World(
        [
            ObjectFact("sofa", "s1", "image2", "red", loc),
            ObjectFact("table", "t1", "image1", "brown", loc),
        ]
    )
    tree = template_tree("negation_1", {"category": "sofa"})
    assert dcs.denote_answer(tree, world) == {"image1"}


def test_superlative_template_matches_volume_oracle():
    rng = np.random.default_rng(8)
    objects = [
        ObjectFact("box", f"b{i}", "image1", "red", random_loc(rng)) for i in range(5)
    ]
    world = World(objects)
    tree = template_tree("superlative", {"image_id": "image1"})
    best = max(objects, key=lambda o: o.loc.volume())
    assert dcs.denote_answer(tree, world) == {best.category}


def test_generate_synthetic_counts_and_consistency():
    world = random_world(
        30,
        n_images=25,
        max_objects_per_image=8,
        categories=("table", "chair", "sofa", "bed", "lamp", "cabinet", "desk", "box"),
        room_types=ROOM_TYPES_22,
    )
    pairs = generate_synthetic_qa(world, seed=5)
    assert len(pairs) == sum(t.train_count for t in DEFAULT_TEMPLATES)
    again = generate_synthetic_qa(world, seed=5)
    assert pairs == again
    assert generate_synthetic_qa(world, seed=6) != pairs
    for pair in pairs:
        assert pair.question
        assert pair.gold
        if pair.scope:
            assert pair.scope in pair.question


def test_generate_skips_unsatisfiable_templates(caplog):
    world = random_world(31, n_images=3, room_types=())  # no room annotations
    with caplog.at_level(logging.WARNING):
        pairs = generate_synthetic_qa(world, seed=1)
    questions = " ".join(p.question for p in pairs)
    assert "room" not in questions
    assert "room_type" in caplog.text


def test_profile_counts():
    assert sum(train_counts().values()) == 140
    assert sum(test_counts().values()) == 280
    assert train_counts()["negation_1"] == 10
    assert test_counts()["negation_2"] == 20


def test_answer_stats_closed_form():
    pairs = []
    for i, term in enumerate(["a", "b", "c", "d", "e"]):
        pairs += [QAPair(f"q{i}{j}", frozenset({term})) for j in range(i + 1)]
    stats = answer_stats(pairs)
    assert sorted(stats.counts.values()) == [1, 2, 3, 4, 5]
    assert stats.mean == pytest.approx(3.0)
    assert stats.trimean == pytest.approx(3.0)

    single = answer_stats([QAPair("q", frozenset({"x"}))] * 4)
    assert single.mean == single.trimean == 4.0


def test_answer_stats_matches_quantile_oracle():
    rng = np.random.default_rng(9)
    pairs = []
    terms = [f"t{i}" for i in range(12)]
    for i, term in enumerate(terms):
        for j in range(int(rng.integers(1, 30))):
            pairs.append(QAPair(f"q{i}_{j}", frozenset({term})))
    stats = answer_stats(pairs)
    values = sorted(stats.counts.values())

    def quantile(q):  # linear interpolation between order statistics
        pos = (len(values) - 1) * q
        lo, hi = math.floor(pos), math.ceil(pos)
        return values[lo] + (values[hi] - values[lo]) * (pos - lo)

    want = (quantile(0.25) + 2 * quantile(0.5) + quantile(0.75)) / 4
    assert stats.trimean == pytest.approx(want)
    assert stats.mean == pytest.approx(sum(values) / len(values))
