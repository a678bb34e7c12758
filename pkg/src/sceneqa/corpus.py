"""Corpus ingestion and synthesis.

File formats (all text, one record per line, tab-delimited):
  facts:         image_id, instance_id, category, color, then 9 location
                 values x_min x_max x_mean y_min y_max y_mean z_min z_max z_mean
  scenes:        image_id, room_type
  segmentations: image_id, segment_id, color, 9 location values, then
                 comma-separated category:probability pairs
  qa:            alternating question / answer lines, answers comma-separated
  splits:        one image id per line
Lines that are blank or start with '#' are skipped; a '# log_weight <x>'
comment in a fact file records the world's log probability.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import dcs
from .dcs import DcsTree, Join, format_answer, parse_answer
from .scene import BASIC_COLORS, DEFAULT_EPS, ObjectFact, SceneFact, SpatialLoc, World
from .text import IMAGE_TOKEN, normalize, pluralize
from .worlds import SegmentLabelDist

log = logging.getLogger(__name__)

_SEED_MASK = 0xFFFFFFFF


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class QAPair:
    question: str
    gold: frozenset[str]
    scope: str | None = None  # image id for single-image questions, else None


@dataclass(frozen=True)
class TemplateSpec:
    template_id: str
    pattern: str
    scope: str  # "individual" | "set"
    train_count: int
    test_count: int


# Synthetic question templates; slots are instantiated with facts present in
# the generating world. Default per-template counts follow the experimental
# protocol (negation types 1 and 2 use half-sized sets).
DEFAULT_TEMPLATES = (
    TemplateSpec("counting", "How many {object} are in {image_id}?", "individual", 20, 40),
    TemplateSpec(
        "counting_color", "How many {color} {object} are in {image_id}?", "individual", 20, 40
    ),
    TemplateSpec(
        "room_type", "Which type of the room is depicted in {image_id}?", "individual", 20, 40
    ),
    TemplateSpec(
        "superlative", "What is the largest {object} in {image_id}?", "individual", 20, 40
    ),
    TemplateSpec("counting_color_set", "How many {color} {object}?", "set", 20, 40),
    TemplateSpec("negation_1", "Which images do not have {object}?", "set", 10, 20),
    TemplateSpec("negation_2", "Which images are not {room_type}?", "set", 10, 20),
    TemplateSpec(
        "negation_3",
        "Which images have {object} but do not have a {object2}?",
        "set",
        20,
        40,
    ),
)


# --- loading ---------------------------------------------------------------

def _data_lines(path) -> list[tuple[int, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            out.append((lineno, line))
    return out


def _parse_loc(path, lineno, fields: Sequence[str]) -> SpatialLoc:
    if len(fields) != 9:
        raise CorpusError(f"{path}:{lineno}: expected 9 location values, got {len(fields)}")
    try:
        vals = [float(f) for f in fields]
        return SpatialLoc(*vals)
    except ValueError as exc:
        raise CorpusError(f"{path}:{lineno}: bad location: {exc}") from exc


def _read_log_weight(path) -> float:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# log_weight"):
                return float(line.split()[2])
    return 0.0


@dataclass
class FactCorpus:
    """Per-image batches of object facts plus room-type annotations."""

    objects_by_image: dict[str, tuple[ObjectFact, ...]]
    scene_by_image: dict[str, SceneFact]
    log_weight: float = 0.0

    @property
    def images(self) -> list[str]:
        return sorted(set(self.objects_by_image) | set(self.scene_by_image))

    def world(self, image_ids: Iterable[str] | None = None) -> World:
        keep = set(self.images if image_ids is None else image_ids)
        objects = [
            o for img in sorted(keep) for o in self.objects_by_image.get(img, ())
        ]
        scenes = [self.scene_by_image[img] for img in sorted(keep) if img in self.scene_by_image]
        return World(objects, scenes, self.log_weight)

    def batch(self, image_id: str) -> tuple[tuple[ObjectFact, ...], tuple[SceneFact, ...]]:
        scene = self.scene_by_image.get(image_id)
        return (
            self.objects_by_image.get(image_id, ()),
            (scene,) if scene else (),
        )


def load_facts(facts_path, scenes_path=None) -> FactCorpus:
    """Parse a fact file (and optional scene file) into per-image batches."""
    by_image: dict[str, list[ObjectFact]] = {}
    seen_ids: set[str] = set()
    for lineno, line in _data_lines(facts_path):
        fields = line.split("\t")
        if len(fields) != 13:
            raise CorpusError(f"{facts_path}:{lineno}: expected 13 fields, got {len(fields)}")
        image_id, instance_id, category, color = (f.strip().lower() for f in fields[:4])
        if not category:
            raise CorpusError(f"{facts_path}:{lineno}: empty category")
        if instance_id in seen_ids:
            raise CorpusError(f"{facts_path}:{lineno}: duplicate instance id {instance_id}")
        seen_ids.add(instance_id)
        if color not in BASIC_COLORS:
            log.warning("%s:%d: unknown color term %r (kept verbatim)", facts_path, lineno, color)
        loc = _parse_loc(facts_path, lineno, fields[4:])
        by_image.setdefault(image_id, []).append(
            ObjectFact(category, instance_id, image_id, color, loc)
        )
    scene_by_image = {}
    if scenes_path is not None:
        scene_by_image = load_scenes(scenes_path)
    return FactCorpus(
        {
            img: tuple(sorted(objs, key=lambda o: o.instance_id))
            for img, objs in sorted(by_image.items())
        },
        scene_by_image,
        _read_log_weight(facts_path),
    )


def load_scenes(path) -> dict[str, SceneFact]:
    out: dict[str, SceneFact] = {}
    for lineno, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise CorpusError(f"{path}:{lineno}: expected 'image_id TAB room_type'")
        image_id, room = (f.strip().lower() for f in fields)
        if image_id in out and out[image_id].room_type != room:
            raise CorpusError(f"{path}:{lineno}: conflicting room type for {image_id}")
        out[image_id] = SceneFact(image_id, room)
    return out


def load_segmentations(path) -> list[SegmentLabelDist]:
    """Parse segment label distributions; sums within 1e-3 of 1 are renormalized."""
    segments = []
    seen: set[str] = set()
    for lineno, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 13:
            raise CorpusError(f"{path}:{lineno}: expected 13 fields, got {len(fields)}")
        image_id, segment_id, color = (f.strip().lower() for f in fields[:3])
        if segment_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate segment id {segment_id}")
        seen.add(segment_id)
        loc = _parse_loc(path, lineno, fields[3:12])
        labels = []
        for part in fields[12].split(","):
            if ":" not in part:
                raise CorpusError(f"{path}:{lineno}: bad label entry {part!r}")
            cat, _, p_str = part.rpartition(":")
            try:
                p = float(p_str)
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: bad probability {p_str!r}") from exc
            if p < 0:
                raise CorpusError(f"{path}:{lineno}: negative probability {p}")
            labels.append((cat.strip().lower(), p))
        total = sum(p for _, p in labels)
        if abs(total - 1.0) > 1e-3:
            raise CorpusError(f"{path}:{lineno}: probabilities sum to {total:.6f}")
        labels = tuple((c, p / total) for c, p in labels)
        segments.append(SegmentLabelDist(segment_id, image_id, color, loc, labels))
    return segments


def load_qa(path) -> list[QAPair]:
    """Alternating question/answer lines; scope inferred from imageN mentions."""
    lines = [line for _, line in _data_lines(path)]
    if len(lines) % 2 != 0:
        raise CorpusError(f"{path}: odd number of lines ({len(lines)})")
    pairs = []
    for q, a in zip(lines[0::2], lines[1::2]):
        scope = next((tok for tok in normalize(q).split() if IMAGE_TOKEN.match(tok)), None)
        pairs.append(QAPair(q, parse_answer(a), scope))
    return pairs


def load_image_ids(path) -> list[str]:
    return [line.strip().lower() for _, line in _data_lines(path)]


def load_answers(path) -> list[frozenset[str]]:
    """One answer per line (may be the empty answer), comma-separated terms."""
    with open(path, encoding="utf-8") as fh:
        return [parse_answer(line.rstrip("\n")) for line in fh]


# --- writing ---------------------------------------------------------------

def write_facts(path, objects: Iterable[ObjectFact], log_weight: float = 0.0):
    with open(path, "w", encoding="utf-8") as fh:
        if log_weight != 0.0:
            fh.write(f"# log_weight {log_weight!r}\n")
        for o in sorted(objects, key=lambda o: (o.image_id, o.instance_id)):
            fields = [o.image_id, o.instance_id, o.category, o.color]
            fields += [repr(v) for v in o.loc.as_tuple()]
            fh.write("\t".join(fields) + "\n")


def write_scenes(path, scenes: Iterable[SceneFact]):
    with open(path, "w", encoding="utf-8") as fh:
        for s in sorted(scenes, key=lambda s: s.image_id):
            fh.write(f"{s.image_id}\t{s.room_type}\n")


def write_segmentations(path, segments: Iterable[SegmentLabelDist]):
    with open(path, "w", encoding="utf-8") as fh:
        for seg in sorted(segments, key=lambda s: (s.image_id, s.segment_id)):
            fields = [seg.image_id, seg.segment_id, seg.color]
            fields += [repr(v) for v in seg.loc.as_tuple()]
            fields.append(",".join(f"{c}:{p!r}" for c, p in seg.labels))
            fh.write("\t".join(fields) + "\n")


def write_qa(path, pairs: Iterable[QAPair]):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(p.question.strip() + "\n")
            fh.write(format_answer(p.gold) + "\n")


def write_answers(path, answers: Iterable[frozenset[str]]):
    with open(path, "w", encoding="utf-8") as fh:
        for a in answers:
            fh.write(format_answer(a) + "\n")


# --- synthetic question generation -----------------------------------------

def _image_restrict(image_id: str) -> DcsTree:
    # trace membership node restricting instances to one image
    return DcsTree("image", ((Join(2, 1), dcs.leaf(image_id)),))


def template_tree(template_id: str, slots: Mapping[str, str]) -> DcsTree:
    """Canonical logical form for one instantiated template."""
    if template_id == "counting":
        body = dcs.with_edge(dcs.leaf(slots["category"]), Join(1, 1), _image_restrict(slots["image_id"]))
        return dcs.count_node(body)
    if template_id == "counting_color":
        body = dcs.with_edge(dcs.leaf(slots["category"]), Join(1, 1), dcs.leaf(slots["color"]))
        body = dcs.with_edge(body, Join(1, 1), _image_restrict(slots["image_id"]))
        return dcs.count_node(body)
    if template_id == "room_type":
        return dcs.with_edge(dcs.leaf("room"), Join(1, 1), dcs.leaf(slots["image_id"]))
    if template_id == "superlative":
        body = dcs.with_edge(dcs.leaf("object"), Join(1, 1), _image_restrict(slots["image_id"]))
        return dcs.superlative_node("max", body)
    if template_id == "counting_color_set":
        body = dcs.with_edge(dcs.leaf(slots["category"]), Join(1, 1), dcs.leaf(slots["color"]))
        return dcs.count_node(body)
    if template_id == "negation_1":
        has = dcs.with_edge(dcs.leaf("image"), Join(1, 1), dcs.leaf(slots["category"]))
        return dcs.negation_node("images", has)
    if template_id == "negation_2":
        return dcs.negation_node("images", dcs.leaf(slots["room_type"]))
    if template_id == "negation_3":
        lacks = dcs.negation_node(
            "images", dcs.with_edge(dcs.leaf("image"), Join(1, 1), dcs.leaf(slots["category2"]))
        )
        tree = dcs.with_edge(dcs.leaf("image"), Join(1, 1), dcs.leaf(slots["category"]))
        return dcs.with_edge(tree, Join(2, 1), lacks)
    raise CorpusError(f"unknown template: {template_id}")


def _pick(rng: np.random.Generator, items: Sequence[str]) -> str:
    return items[int(rng.integers(len(items)))]


def _fill_slots(rng, template: TemplateSpec, world: World) -> dict[str, str] | None:
    slots: dict[str, str] = {}
    if "{image_id}" in template.pattern:
        slots["image_id"] = _pick(rng, world.images)
    in_image = [
        o for o in world.objects if o.image_id == slots.get("image_id", o.image_id)
    ]
    if "{color}" in template.pattern:
        if not in_image:
            return None
        picked = in_image[int(rng.integers(len(in_image)))]
        slots["color"] = picked.color
        slots["category"] = picked.category
    elif "{object}" in template.pattern and template.template_id != "superlative":
        cats = sorted({o.category for o in in_image})
        if not cats:
            return None
        slots["category"] = _pick(rng, cats)
    if "{object2}" in template.pattern:
        other = sorted(world.categories - {slots["category"]})
        if not other:
            return None
        slots["category2"] = _pick(rng, other)
    if "{room_type}" in template.pattern:
        rooms = sorted(world.room_types)
        if not rooms:
            return None
        slots["room_type"] = _pick(rng, rooms)
    return slots


def _display_plural(category: str) -> str:
    # class names that already look plural (books, shelves) stay as they are
    return category if category.endswith("s") else pluralize(category)


def _render(template: TemplateSpec, slots: Mapping[str, str]) -> str:
    text = template.pattern
    # counting questions pluralize the object; negations use the bare class
    # name and the superlative slot is the generic word, per the template rows
    if "category" not in slots:
        obj = "object"
    elif template.template_id.startswith("counting"):
        obj = _display_plural(slots["category"])
    else:
        obj = slots["category"]
    replacements = {
        "{object}": obj,
        "{object2}": slots.get("category2", ""),
        "{color}": slots.get("color", ""),
        "{image_id}": slots.get("image_id", ""),
        "{room_type}": slots.get("room_type", ""),
    }
    for k, v in replacements.items():
        text = text.replace(k, v)
    return text


def generate_synthetic_qa(
    world: World,
    templates: Sequence[TemplateSpec] = DEFAULT_TEMPLATES,
    counts: Mapping[str, int] | None = None,
    seed: int = 0,
    eps: float = DEFAULT_EPS,
) -> list[QAPair]:
    """Instantiate templates with facts from the world; golds come from
    evaluating each template's canonical tree on that world."""
    if not world.objects:
        raise ValueError("empty world")
    pairs: list[QAPair] = []
    for idx, template in enumerate(templates):
        want = template.train_count if counts is None else counts.get(template.template_id, 0)
        rng = np.random.default_rng(np.random.SeedSequence([seed & _SEED_MASK, idx]))
        emitted: set[str] = set()
        attempts = 0
        while len(emitted) < want and attempts < 200 * max(want, 1):
            attempts += 1
            slots = _fill_slots(rng, template, world)
            if slots is None:
                break  # unsatisfiable in this world
            question = _render(template, slots)
            if question in emitted:
                continue
            gold = dcs.denote_answer(template_tree(template.template_id, slots), world, eps)
            if not gold:
                continue
            emitted.add(question)
            scope = slots.get("image_id") if template.scope == "individual" else None
            pairs.append(QAPair(question, gold, scope))
        if len(emitted) < want:
            log.warning(
                "template %s: generated %d of %d pairs", template.template_id, len(emitted), want
            )
    return pairs


def test_counts(templates: Sequence[TemplateSpec] = DEFAULT_TEMPLATES) -> dict[str, int]:
    return {t.template_id: t.test_count for t in templates}


def train_counts(templates: Sequence[TemplateSpec] = DEFAULT_TEMPLATES) -> dict[str, int]:
    return {t.template_id: t.train_count for t in templates}


# --- dataset statistics ------------------------------------------------------

@dataclass(frozen=True)
class AnswerStats:
    counts: dict[str, int]
    mean: float
    trimean: float


def answer_stats(pairs: Sequence[QAPair]) -> AnswerStats:
    """Per-term occurrence counts with mean and Tukey trimean across terms.

    Quartiles use linear interpolation between order statistics."""
    if not pairs:
        raise ValueError("no pairs")
    counts: dict[str, int] = {}
    for p in pairs:
        for term in p.gold:
            counts[term] = counts.get(term, 0) + 1
    values = np.array(sorted(counts.values()), dtype=float)
    q1, q2, q3 = np.percentile(values, [25, 50, 75])
    return AnswerStats(counts, float(values.mean()), float((q1 + 2 * q2 + q3) / 4))
