"""Possible worlds from uncertain segmentations, plus TF.IDF batch retrieval.

A segmentation assigns each segment a categorical distribution over object
categories. Binding one category per segment yields a world whose probability
is the product of the chosen label probabilities; sampling draws each
segment's category independently.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .scene import ObjectFact, SceneFact, SpatialLoc, World

log = logging.getLogger(__name__)

_SEED_MASK = 0xFFFFFFFF


@dataclass(frozen=True)
class SegmentLabelDist:
    """One segment with its categorical label distribution."""

    segment_id: str
    image_id: str
    color: str
    loc: SpatialLoc
    labels: tuple[tuple[str, float], ...]  # (category, probability)

    def __post_init__(self):
        if not self.labels:
            raise ValueError(f"segment {self.segment_id} has no labels")
        total = 0.0
        for cat, p in self.labels:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"segment {self.segment_id}: probability {p} outside [0,1]")
            total += p
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"segment {self.segment_id}: probabilities sum to {total}")


@dataclass(frozen=True)
class FactBatch:
    """The term set induced by one image, the unit of TF.IDF retrieval."""

    batch_id: str
    term_set: frozenset[str]


def batch_of_facts(
    batch_id: str,
    objects: Iterable[ObjectFact],
    scenes: Iterable[SceneFact] = (),
) -> FactBatch:
    terms = set()
    for o in objects:
        terms.add(o.category)
        terms.add(o.color)
    for s in scenes:
        terms.add(s.room_type)
    return FactBatch(batch_id, frozenset(terms))


def _fact_for(segment: SegmentLabelDist, category: str) -> ObjectFact:
    return ObjectFact(
        category=category,
        instance_id=segment.segment_id,
        image_id=segment.image_id,
        color=segment.color,
        loc=segment.loc,
    )


def most_confident_world(
    scene: Sequence[SegmentLabelDist],
    scene_facts: Iterable[SceneFact] = (),
) -> World:
    """The single world taking each segment's maximum-probability label.

    Argmax ties break to the label listed first in the distribution.
    """
    if not scene:
        raise ValueError("empty scene")
    objects = []
    log_weight = 0.0
    for seg in scene:
        cat, p = max(seg.labels, key=lambda cp: cp[1])
        objects.append(_fact_for(seg, cat))
        log_weight += math.log(p) if p > 0 else -math.inf
    return World(objects, scene_facts, log_weight)


def world_log_prob(
    scene: Sequence[SegmentLabelDist], binding: Mapping[str, str]
) -> float:
    """log P(W|S) under the per-segment product form; -inf if any chosen p is 0."""
    total = 0.0
    for seg in scene:
        if seg.segment_id not in binding:
            raise ValueError(f"binding misses segment {seg.segment_id}")
        chosen = binding[seg.segment_id]
        p = dict(seg.labels).get(chosen)
        if p is None:
            raise ValueError(f"segment {seg.segment_id} has no label {chosen}")
        if p == 0.0:
            return -math.inf
        total += math.log(p)
    return total


def world_from_binding(
    scene: Sequence[SegmentLabelDist],
    binding: Mapping[str, str],
    scene_facts: Iterable[SceneFact] = (),
) -> World:
    objects = [_fact_for(seg, binding[seg.segment_id]) for seg in scene]
    return World(objects, scene_facts, world_log_prob(scene, binding))


def _draw_category(seed: int, world_idx: int, seg_idx: int, labels) -> tuple[str, float]:
    # one independent stream per (world, segment): draws are order-independent
    ss = np.random.SeedSequence([seed & _SEED_MASK, world_idx, seg_idx])
    u = np.random.default_rng(ss).random()
    acc = 0.0
    for cat, p in labels:
        acc += p
        if u < acc:
            return cat, p
    return labels[-1]


def sample_worlds(
    scene: Sequence[SegmentLabelDist],
    n: int,
    seed: int,
    scene_facts: Iterable[SceneFact] = (),
) -> list[World]:
    """Draw n worlds, each segment's category independently from its labels."""
    if n < 1:
        raise ValueError(f"need at least one world, got {n}")
    scene_facts = tuple(scene_facts)
    worlds = []
    for i in range(n):
        objects = []
        log_weight = 0.0
        for j, seg in enumerate(scene):
            cat, p = _draw_category(seed, i, j, seg.labels)
            objects.append(_fact_for(seg, cat))
            log_weight += math.log(p) if p > 0 else -math.inf
        worlds.append(World(objects, scene_facts, log_weight))
    return worlds


def tfidf_select_batches(
    query: FactBatch, corpus: Sequence[FactBatch], k: int
) -> list[str]:
    """Rank corpus batches by cosine similarity of boolean-TF, IDF-weighted vectors.

    idf(t) = ln(|corpus| / df(t)); query terms absent from the corpus are
    skipped. Returns the top-k batch ids, ties broken by ascending id.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    ordered_ids = sorted(b.batch_id for b in corpus)
    if not query.term_set:
        log.warning("degenerate TF.IDF query (empty term set): returning first %d ids", k)
        return ordered_ids[:k]

    df: dict[str, int] = {}
    for b in corpus:
        for t in b.term_set:
            df[t] = df.get(t, 0) + 1
    idf = {t: math.log(len(corpus) / d) for t, d in df.items()}

    def vector(terms):
        return {t: idf[t] for t in terms if t in idf}

    def norm(vec):
        return math.sqrt(sum(w * w for w in vec.values()))

    qv = vector(query.term_set)
    qn = norm(qv)
    scored = []
    for b in corpus:
        bv = vector(b.term_set)
        bn = norm(bv)
        if qn == 0.0 or bn == 0.0:
            sim = 0.0
        else:
            sim = sum(w * bv.get(t, 0.0) for t, w in qv.items()) / (qn * bn)
        scored.append((-sim, b.batch_id))
    scored.sort()
    return [bid for _, bid in scored[:k]]


def build_training_world(
    batches: Sequence[tuple[Sequence[ObjectFact], Sequence[SceneFact]]],
) -> World:
    """Set union of the selected batches' facts as one deterministic world.

    A fact repeated across batches appears once; an instance id reused for a
    *different* fact is re-keyed with a ~n suffix in batch order. Conflicting
    room types keep the first occurrence.
    """
    if not batches:
        raise ValueError("need at least one batch")
    objects: list[ObjectFact] = []
    seen: dict[str, ObjectFact] = {}
    rooms: dict[str, SceneFact] = {}
    for objs, scene_facts in batches:
        for o in sorted(objs, key=lambda o: (o.image_id, o.instance_id)):
            if seen.get(o.instance_id) == o:
                continue
            iid = o.instance_id
            n = 1
            while iid in seen:
                n += 1
                iid = f"{o.instance_id}~{n}"
            kept = o if iid == o.instance_id else replace(o, instance_id=iid)
            seen[iid] = kept
            objects.append(kept)
        for s in scene_facts:
            rooms.setdefault(s.image_id, s)
    return World(objects, rooms.values(), 0.0)
