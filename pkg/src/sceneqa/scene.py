"""Symbolic scene layer: object facts, cuboid geometry, spatial predicates.

Coordinates are gravity-aligned scene meters; the Y axis points downwards,
so above(A, B) means A's mean Y is smaller than B's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

DEFAULT_EPS = 0.1  # meters; the closeness slack for the close* relations

# Basic color vocabulary used for object color annotations.
BASIC_COLORS = frozenset(
    {
        "black",
        "blue",
        "brown",
        "gray",
        "grey",
        "green",
        "orange",
        "pink",
        "purple",
        "red",
        "white",
        "yellow",
    }
)


@dataclass(frozen=True)
class SpatialLoc:
    """Axis-parallel cuboid summary: (min, max, mean) per axis."""

    x_min: float
    x_max: float
    x_mean: float
    y_min: float
    y_max: float
    y_mean: float
    z_min: float
    z_max: float
    z_mean: float

    def __post_init__(self):
        for axis in "xyz":
            for side in ("min", "max", "mean"):
                name = f"{axis}_{side}"
                v = float(getattr(self, name))  # numpy scalars become plain floats
                if not math.isfinite(v):
                    raise ValueError(f"non-finite {axis} coordinate: {v}")
                object.__setattr__(self, name, v)
            lo, hi = getattr(self, axis + "_min"), getattr(self, axis + "_max")
            mid = getattr(self, axis + "_mean")
            if not lo <= mid <= hi:
                raise ValueError(f"{axis} axis violates min <= mean <= max: {lo}, {mid}, {hi}")

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.x_min,
            self.x_max,
            self.x_mean,
            self.y_min,
            self.y_max,
            self.y_mean,
            self.z_min,
            self.z_max,
            self.z_mean,
        )

    def volume(self) -> float:
        """Cuboid volume, the size measure used by superlatives."""
        return (
            (self.x_max - self.x_min)
            * (self.y_max - self.y_min)
            * (self.z_max - self.z_min)
        )


def cuboid_from_points(points: Iterable[Sequence[float]]) -> SpatialLoc:
    """Fit an axis-parallel cuboid: per-axis min, max and arithmetic mean."""
    pts = [tuple(float(c) for c in p) for p in points]
    if not pts:
        raise ValueError("empty geometry")
    out = []
    for axis in range(3):
        coords = [p[axis] for p in pts]
        lo, hi = min(coords), max(coords)
        mean = sum(coords) / len(coords)
        # guard against float rounding pushing the mean past the extremes
        out.extend((lo, hi, min(max(mean, lo), hi)))
    return SpatialLoc(*out)


@dataclass(frozen=True)
class ObjectFact:
    """One recognized object: predicate(instance_id, image_id, color, spatial_loc)."""

    category: str
    instance_id: str
    image_id: str
    color: str
    loc: SpatialLoc

    def __post_init__(self):
        if not self.category:
            raise ValueError("object fact with empty category")


@dataclass(frozen=True)
class SceneFact:
    """Per-image room-type annotation."""

    image_id: str
    room_type: str


class World:
    """An immutable set of facts constituting one interpretation of the scenes.

    Spatial-relation extensions are computed lazily and memoized per
    (relation, eps); the fill is idempotent, so concurrent readers are safe.
    """

    def __init__(
        self,
        objects: Iterable[ObjectFact] = (),
        scenes: Iterable[SceneFact] = (),
        log_weight: float = 0.0,
    ):
        self.objects = tuple(sorted(objects, key=lambda o: (o.image_id, o.instance_id)))
        self.scenes = tuple(sorted(scenes, key=lambda s: s.image_id))
        if math.isnan(log_weight) or log_weight > 0:
            raise ValueError(f"log_weight must be <= 0, got {log_weight}")
        self.log_weight = float(log_weight)

        self.objects_by_id: dict[str, ObjectFact] = {}
        for o in self.objects:
            if o.instance_id in self.objects_by_id:
                raise ValueError(f"duplicate instance id: {o.instance_id}")
            self.objects_by_id[o.instance_id] = o
        self.room_by_image: dict[str, str] = {}
        for s in self.scenes:
            if self.room_by_image.get(s.image_id, s.room_type) != s.room_type:
                raise ValueError(f"conflicting room types for {s.image_id}")
            self.room_by_image[s.image_id] = s.room_type
        self.images = tuple(
            sorted({o.image_id for o in self.objects} | set(self.room_by_image))
        )
        self.categories = frozenset(o.category for o in self.objects)
        self.colors = frozenset(o.color for o in self.objects)
        self.room_types = frozenset(self.room_by_image.values())
        self._relation_memo: dict[tuple[str, float], frozenset] = {}

    def __repr__(self):
        return (
            f"World({len(self.objects)} objects, {len(self.images)} images, "
            f"log_weight={self.log_weight:.4g})"
        )


# --- Table-1 spatial predicates ------------------------------------------

def _left_of(a: SpatialLoc, b: SpatialLoc, eps: float) -> bool:
    return a.x_mean < b.x_mean


def _above(a: SpatialLoc, b: SpatialLoc, eps: float) -> bool:
    return a.y_mean < b.y_mean  # Y points down


def _in_front_of(a: SpatialLoc, b: SpatialLoc, eps: float) -> bool:
    return a.z_mean < b.z_mean


def _close_above(a, b, eps):
    return _above(a, b, eps) and b.y_min < a.y_max + eps


def _close_left_of(a, b, eps):
    return _left_of(a, b, eps) and b.x_min < a.x_max + eps


def _close_in_front_of(a, b, eps):
    return _in_front_of(a, b, eps) and b.z_min < a.z_max + eps


def _x_aux(a, b):
    return a.x_mean < b.x_max and b.x_min < a.x_mean


def _z_aux(a, b):
    return a.z_mean < b.z_max and b.z_min < a.z_mean


def _on(a, b, eps):
    return _close_above(a, b, eps) and _z_aux(a, b) and _x_aux(a, b)


def _close(a, b, eps):
    h = _close_above(a, b, eps) or _close_above(b, a, eps)
    v = _close_left_of(a, b, eps) or _close_left_of(b, a, eps)
    d = _close_in_front_of(a, b, eps) or _close_in_front_of(b, a, eps)
    return h or v or d


# Symmetric forms are defined by argument swap, e.g. below(A,B) = above(B,A).
_RELATIONS = {
    "leftOf": _left_of,
    "rightOf": lambda a, b, eps: _left_of(b, a, eps),
    "above": _above,
    "below": lambda a, b, eps: _above(b, a, eps),
    "inFrontOf": _in_front_of,
    "behind": lambda a, b, eps: _in_front_of(b, a, eps),
    "closeAbove": _close_above,
    "closeBelow": lambda a, b, eps: _close_above(b, a, eps),
    "closeLeftOf": _close_left_of,
    "closeRightOf": lambda a, b, eps: _close_left_of(b, a, eps),
    "closeInFrontOf": _close_in_front_of,
    "closeBehind": lambda a, b, eps: _close_in_front_of(b, a, eps),
    "on": _on,
    "close": _close,
}

RELATION_NAMES = tuple(_RELATIONS)

# relation names are camelCase but lookups are case-insensitive
_RELATIONS_BY_LOWER = {name.lower(): (name, fn) for name, fn in _RELATIONS.items()}


def canonical_relation(rel: str) -> str | None:
    entry = _RELATIONS_BY_LOWER.get(rel.strip().lower())
    return entry[0] if entry else None


def eval_spatial(rel: str, a: SpatialLoc, b: SpatialLoc, eps: float = DEFAULT_EPS) -> bool:
    """Evaluate one spatial relation between cuboids A and B."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    entry = _RELATIONS_BY_LOWER.get(rel.strip().lower())
    if entry is None:
        raise ValueError(f"unknown relation: {rel}")
    return entry[1](a, b, eps)


def relation_pairs(world: World, rel: str, eps: float = DEFAULT_EPS) -> frozenset:
    """All (instance, instance) pairs within the same image satisfying rel.

    Memoized on the world; questions never relate objects across images.
    """
    rel = canonical_relation(rel) or rel
    if rel not in _RELATIONS:
        raise ValueError(f"unknown relation: {rel}")
    key = (rel, eps)
    pairs = world._relation_memo.get(key)
    if pairs is None:
        found = []
        for a in world.objects:
            for b in world.objects:
                if a.instance_id == b.instance_id or a.image_id != b.image_id:
                    continue
                if eval_spatial(rel, a.loc, b.loc, eps):
                    found.append((a.instance_id, b.instance_id))
        pairs = frozenset(found)
        world._relation_memo[key] = pairs
    return pairs


def query_predicate(world: World, name: str, eps: float = DEFAULT_EPS) -> frozenset:
    """Uniform fact access: the extension of a predicate name in this world.

    Categories and colors denote (instance,) tuples, spatial relations
    (instance, instance) pairs, "image" the (instance, image) membership
    pairs, "room" the (image, room_type) pairs, room types (image,) tuples,
    a known image id its own singleton, and "object" every instance.
    Anything else denotes the empty set.
    """
    name = name.lower().strip()
    if name in _RELATIONS_BY_LOWER:
        return relation_pairs(world, name, eps)
    if name == "image":
        return frozenset((o.instance_id, o.image_id) for o in world.objects)
    if name == "room":
        return frozenset(world.room_by_image.items())
    if name == "object":
        return frozenset((i,) for i in world.objects_by_id)
    ids = frozenset(
        (o.instance_id,)
        for o in world.objects
        if o.category == name or o.color == name
    )
    if ids:
        return ids
    rooms = frozenset(
        (img,) for img, rt in world.room_by_image.items() if rt == name
    )
    if rooms:
        return rooms
    if name in world.images:
        return frozenset({(name,)})
    return frozenset()
