"""Shared builders for randomized tests: cuboids, worlds, segmentations."""

import numpy as np
import pytest

from sceneqa.scene import ObjectFact, SceneFact, SpatialLoc, World
from sceneqa.worlds import SegmentLabelDist

# the 37 informative indoor object classes used throughout the tests
CATEGORIES_37 = (
    "bag", "bathtub", "bed", "blinds", "books", "bookshelf", "box", "cabinet",
    "ceiling", "chair", "clothes", "counter", "curtain", "desk", "door",
    "dresser", "floor", "floor mat", "lamp", "mirror", "night stand", "paper",
    "person", "picture", "pillow", "refrigerator", "shelves", "shower curtain",
    "sink", "sofa", "table", "television", "toilet", "towel", "wall",
    "whiteboard", "window",
)

COLORS_8 = ("black", "blue", "brown", "gray", "green", "red", "white", "yellow")

ROOM_TYPES_22 = (
    "kitchen", "office", "bathroom", "bedroom", "bookstore", "classroom",
    "computer lab", "conference room", "dinette", "dining room",
    "exercise room", "foyer", "furniture store", "home office", "home storage",
    "indoor balcony", "laundry room", "living room", "playroom", "printer room",
    "reception room", "study room",
)


def random_loc(rng: np.random.Generator, span: float = 3.0) -> SpatialLoc:
    center = rng.uniform(-span, span, size=3)
    half = rng.uniform(0.02, 0.9, size=3)
    lo, hi = center - half, center + half
    mean = rng.uniform(lo, hi)
    return SpatialLoc(lo[0], hi[0], mean[0], lo[1], hi[1], mean[1], lo[2], hi[2], mean[2])


def random_world(
    seed: int,
    n_images: int = 3,
    max_objects_per_image: int = 4,
    categories=CATEGORIES_37[:6],
    colors=COLORS_8[:4],
    room_types=ROOM_TYPES_22[:4],
) -> World:
    rng = np.random.default_rng(seed)
    objects, scenes = [], []
    iid = 0
    for i in range(1, n_images + 1):
        img = f"image{i}"
        if room_types:
            scenes.append(SceneFact(img, room_types[int(rng.integers(len(room_types)))]))
        for _ in range(int(rng.integers(1, max_objects_per_image + 1))):
            iid += 1
            objects.append(
                ObjectFact(
                    categories[int(rng.integers(len(categories)))],
                    f"o{iid}",
                    img,
                    colors[int(rng.integers(len(colors)))],
                    random_loc(rng),
                )
            )
    return World(objects, scenes)


def random_scene(
    seed: int,
    n_segments: int = 3,
    categories=("table", "chair", "sofa"),
    image_id: str = "image1",
) -> list[SegmentLabelDist]:
    rng = np.random.default_rng(seed)
    segments = []
    for j in range(n_segments):
        probs = rng.dirichlet(np.ones(len(categories)) * 1.5)
        labels = tuple((c, float(p)) for c, p in zip(categories, probs))
        segments.append(
            SegmentLabelDist(f"s{j}", image_id, "brown", random_loc(rng), labels)
        )
    return segments


@pytest.fixture
def small_world() -> World:
    """Three objects in one kitchen image: brown/white tables and a brown chair."""

    def loc(x0, x1, y0, y1, z0, z1):
        return SpatialLoc(
            x0, x1, (x0 + x1) / 2, y0, y1, (y0 + y1) / 2, z0, z1, (z0 + z1) / 2
        )

    return World(
        [
            ObjectFact("table", "1", "image1", "brown", loc(0, 1, 1, 2, 0, 1)),
            ObjectFact("table", "2", "image1", "white", loc(2, 3, 1, 2, 0, 1)),
            ObjectFact("chair", "3", "image1", "brown", loc(0, 1, 0, 1, 0, 1)),
        ],
        [SceneFact("image1", "kitchen")],
    )
