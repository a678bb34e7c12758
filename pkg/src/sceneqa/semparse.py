"""Log-linear semantic parser trained from question-answer pairs alone.

Questions are scanned for lexicon triggers; a bottom-up beam search composes
the triggered predicates into DCS trees (joins, spatial bridges, counting,
superlatives, negation, plus trace nodes inserted without a lexical trigger).
A log-linear model P(tree | question) over five feature-template families is
trained by alternating candidate regeneration with gradient ascent on the
marginal log-likelihood of candidates that denote the gold answer. Answers
marginalize over trees for a single world and additionally over sampled
worlds in the multi-world setting.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from . import dcs
from .dcs import Bridge, Count, DcsError, DcsTree, Join, Negate, Superlative, format_answer
from .metrics import most_popular_answer
from .scene import DEFAULT_EPS, RELATION_NAMES, World
from .text import IMAGE_TOKEN, normalize, word_variants

log = logging.getLogger(__name__)


class ParserError(ValueError):
    pass


# --- lexicon -----------------------------------------------------------------

# natural-language surface forms for the spatial relation inventory
RELATION_WORDS = {
    "on": "on",
    "on top of": "on",
    "above": "above",
    "over": "above",
    "below": "below",
    "under": "below",
    "beneath": "below",
    "left of": "leftOf",
    "to the left of": "leftOf",
    "right of": "rightOf",
    "to the right of": "rightOf",
    "in front of": "inFrontOf",
    "behind": "behind",
    "near": "close",
    "close to": "close",
    "next to": "close",
}

_TRIGGER_PHRASES = (
    ("how many", "count", ""),
    ("number of", "count", ""),
    ("largest", "sup", "max"),
    ("biggest", "sup", "max"),
    ("smallest", "sup", "min"),
    ("not", "neg", ""),
    ("no", "neg", ""),
)


@dataclass
class Lexicon:
    """Maps normalized phrases to candidate predicates and trigger kinds.

    Entry kinds: "pred" (a predicate name), "count", "sup" (value is the
    direction), "neg", and "rel" (value is a spatial relation name).
    """

    entries: dict[str, frozenset[tuple[str, str]]]
    signatures: dict[str, tuple[str, ...]]

    def signature(self, predicate: str) -> tuple[str, ...] | None:
        sig = self.signatures.get(predicate)
        if sig is None and IMAGE_TOKEN.match(predicate):
            return ("img",)
        return sig

    @property
    def max_phrase_len(self) -> int:
        return max((p.count(" ") + 1 for p in self.entries), default=1)


def build_lexicon(
    pairs: Sequence = (),
    categories: Iterable[str] = (),
    colors: Iterable[str] = (),
    room_types: Iterable[str] = (),
) -> Lexicon:
    """Lexicon over a world vocabulary plus the fixed trigger inventory.

    Vocabulary terms map to their predicate together with singular/plural
    variants; imageN mentions found in the training questions map to
    image-id constants (unseen ones are still recognized at parse time).
    """
    entries: dict[str, set[tuple[str, str]]] = {}
    signatures: dict[str, tuple[str, ...]] = {}

    def add(phrase: str, kind: str, value: str):
        phrase = normalize(phrase)
        if phrase:
            entries.setdefault(phrase, set()).add((kind, value))

    for rt in sorted(set(room_types)):
        signatures[normalize(rt)] = ("img",)
        for v in word_variants(normalize(rt)):
            add(v, "pred", normalize(rt))
    for color in sorted(set(colors)):
        signatures[normalize(color)] = ("inst",)
        add(color, "pred", normalize(color))
    for cat in sorted(set(categories)):
        signatures[normalize(cat)] = ("inst",)  # categories win name clashes
        for v in word_variants(normalize(cat)):
            add(v, "pred", normalize(cat))

    signatures["object"] = ("inst",)
    add("object", "pred", "object")
    add("objects", "pred", "object")
    signatures["image"] = ("inst", "img")
    add("image", "pred", "image")
    add("images", "pred", "image")
    signatures["room"] = ("img", "term")
    add("room", "pred", "room")
    add("rooms", "pred", "room")
    for rel in RELATION_NAMES:
        signatures[rel] = ("inst", "inst")
    for phrase, kind, value in _TRIGGER_PHRASES:
        add(phrase, kind, value)
    for phrase, rel in RELATION_WORDS.items():
        add(phrase, "rel", rel)
    for pair in pairs:
        for tok in normalize(pair.question).split():
            if IMAGE_TOKEN.match(tok):
                signatures[tok] = ("img",)
                add(tok, "pred", tok)

    return Lexicon({p: frozenset(es) for p, es in entries.items()}, signatures)


@dataclass(frozen=True)
class Trigger:
    phrase: str
    start: int
    end: int
    entries: frozenset[tuple[str, str]]


def scan_triggers(question: str, lexicon: Lexicon) -> list[Trigger]:
    """Greedy longest-match scan of the normalized question."""
    tokens = normalize(question).split()
    max_len = lexicon.max_phrase_len
    out = []
    i = 0
    while i < len(tokens):
        hit = None
        for length in range(min(max_len, len(tokens) - i), 0, -1):
            phrase = " ".join(tokens[i : i + length])
            found = lexicon.entries.get(phrase)
            if found:
                hit = Trigger(phrase, i, i + length, found)
                break
            if length == 1 and IMAGE_TOKEN.match(phrase):
                hit = Trigger(phrase, i, i + 1, frozenset({("pred", phrase)}))
                break
        if hit is None:
            i += 1
        else:
            out.append(hit)
            i = hit.end
    return out


# --- features ----------------------------------------------------------------

def _rel_label(rel) -> str:
    if isinstance(rel, Join):
        return f"join:{rel.parent_arg}:{rel.child_arg}"
    if isinstance(rel, Bridge):
        return f"bridge:{rel.via}"
    if isinstance(rel, Count):
        return "count"
    if isinstance(rel, Superlative):
        return f"sup:{rel.direction}"
    return f"neg:{rel.domain}"


def _phrases_in(tree: DcsTree) -> list[str]:
    out = [tree.trigger] if tree.trigger is not None else []
    for rel, child in tree.edges:
        if isinstance(rel, Bridge) and rel.trigger is not None:
            out.append(rel.trigger)
        out.extend(_phrases_in(child))
    return out


def featurize(question: str, tree: DcsTree) -> dict[tuple[str, ...], int]:
    """Counts for the five feature-template families.

    trig: a string triggers a predicate (bridges count under their relation);
    under-rel: a string occurs below an edge with that relation label;
    under-trace: a string occurs below a node inserted without a trigger;
    link: two predicates are connected by a relation label;
    child: a predicate has a child.
    The trigger phrases recorded on the tree come from this question's spans.
    """
    feats: Counter = Counter()

    def walk(node: DcsTree):
        if node.trigger is not None:
            feats[("trig", node.trigger, node.predicate)] += 1
        is_trace = node.trigger is None
        for rel, child in node.edges:
            label = _rel_label(rel)
            feats[("link", node.predicate, label, child.predicate)] += 1
            feats[("child", node.predicate)] += 1
            if isinstance(rel, Bridge) and rel.trigger is not None:
                feats[("trig", rel.trigger, f"bridge:{rel.via}")] += 1
            for phrase in _phrases_in(child):
                feats[("under-rel", phrase, label)] += 1
                if is_trace:
                    feats[("under-trace", phrase, node.predicate)] += 1
            walk(child)

    walk(tree)
    return dict(feats)


# --- model --------------------------------------------------------------------

@dataclass
class ParserModel:
    lexicon: Lexicon
    weights: dict[tuple[str, ...], float] = field(default_factory=dict)
    beam_size: int = 200
    max_depth: int = 4
    fallback_answer: frozenset[str] = frozenset()

    def score(self, feats: Mapping[tuple[str, ...], int]) -> float:
        return sum(self.weights.get(k, 0.0) * v for k, v in feats.items())


def softmax(scores: Sequence[float]) -> list[float]:
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def tree_distribution(
    model: ParserModel, question: str, candidates: Sequence[DcsTree]
) -> list[tuple[DcsTree, float]]:
    """P(tree | question) as a softmax of feature scores over the candidates."""
    if not candidates:
        raise ParserError("no parse")
    scores = [model.score(featurize(question, t)) for t in candidates]
    return list(zip(candidates, softmax(scores)))


# --- candidate generation ------------------------------------------------------

def _combine_pair(a, sig_a, b, sig_b, max_depth):
    out = []
    for head, hs, dep, ds in ((a, sig_a, b, sig_b), (b, sig_b, a, sig_a)):
        if dcs.is_aggregate(head):
            continue  # aggregate nodes are closed; restrictions go inside
        for pi, pt in enumerate(hs, 1):
            for ci, ct in enumerate(ds, 1):
                if pt == ct:
                    out.append((dcs.with_edge(head, Join(pi, ci), dep), hs))
        # trace membership node: restrict an instance set to an image set
        if hs[0] == "inst" and ds == ("img",):
            trace = DcsTree("image", ((Join(2, 1), dep),))
            out.append((dcs.with_edge(head, Join(1, 1), trace), hs))
    return [(t, s) for t, s in out if t.depth() <= max_depth]


def _apply_marker(kind, value, phrase, tree, sig, max_depth):
    out = []
    if kind == "count":
        out.append((dcs.count_node(tree, phrase), ("num",)))
    elif kind == "sup" and sig[-1] == "inst":
        out.append((dcs.superlative_node(value, tree, phrase), ("inst",)))
    elif kind == "neg":
        if sig[-1] == "img":
            out.append((dcs.negation_node("images", tree, phrase), ("img",)))
        elif sig[-1] == "inst":
            trace = DcsTree("image", ((Join(1, 1), tree),))
            out.append((dcs.negation_node("images", trace, phrase), ("img",)))
            out.append((dcs.negation_node("instances", tree, phrase), ("inst",)))
    elif kind == "rel" and sig[0] == "inst":
        # implicit spatial predicate under an inserted universal head
        head = DcsTree("object", ((Bridge(value, trigger=phrase), tree),))
        out.append((head, ("inst",)))
    return [(t, s) for t, s in out if t.depth() <= max_depth]


def generate_candidate_trees(question: str, model: ParserModel) -> list[DcsTree]:
    """Bottom-up beam construction over the question's trigger sequence.

    Chart cells over contiguous trigger spans hold the beam_size best (by
    current model score) type-consistent trees; the candidate list pools all
    cells ranked by trigger coverage, then score, deduplicated by
    serialization and truncated to beam_size.
    """
    triggers = scan_triggers(question, model.lexicon)
    if not triggers:
        return []
    m = len(triggers)

    def prune(items):
        best: dict[str, tuple[float, DcsTree, tuple]] = {}
        for tree, sig in items:
            key = dcs.format_tree(tree)
            score = model.score(featurize(question, tree))
            if key not in best or score > best[key][0]:
                best[key] = (score, tree, sig)
        ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0]))
        return [(t, s) for _, (_, t, s) in ranked[: model.beam_size]]

    trees: dict[tuple[int, int], list] = {}
    markers: dict[int, list[tuple[str, str, str]]] = {}
    for i, trig in enumerate(triggers):
        cell = []
        marks = []
        for kind, value in sorted(trig.entries):
            if kind == "pred":
                sig = model.lexicon.signature(value)
                if sig:
                    cell.append((dcs.leaf(value, trig.phrase), sig))
            else:
                marks.append((kind, value, trig.phrase))
        trees[(i, i)] = prune(cell)
        markers[i] = marks

    for width in range(2, m + 1):
        for i in range(m - width + 1):
            j = i + width - 1
            combos = []
            for k in range(i, j):
                left = trees.get((i, k), [])
                right = trees.get((k + 1, j), [])
                for a, sa in left:
                    for b, sb in right:
                        combos.extend(_combine_pair(a, sa, b, sb, model.max_depth))
                if k == i:
                    for kind, value, phrase in markers[i]:
                        for b, sb in trees.get((i + 1, j), []):
                            combos.extend(
                                _apply_marker(kind, value, phrase, b, sb, model.max_depth)
                            )
                if k + 1 == j:
                    for kind, value, phrase in markers[j]:
                        for a, sa in trees.get((i, j - 1), []):
                            combos.extend(
                                _apply_marker(kind, value, phrase, a, sa, model.max_depth)
                            )
            trees[(i, j)] = prune(combos)

    pooled = []
    for (i, j), cell in trees.items():
        width = j - i + 1
        for tree, _ in cell:
            pooled.append((-width, -model.score(featurize(question, tree)), dcs.format_tree(tree), tree))
    pooled.sort(key=lambda item: item[:3])
    out, seen = [], set()
    for _, _, key, tree in pooled:
        if key not in seen:
            seen.add(key)
            out.append(tree)
        if len(out) >= model.beam_size:
            break
    return out


# --- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 30
    step: float = 0.1
    l2: float = 1e-3
    steps_per_epoch: int = 5
    eps: float = DEFAULT_EPS
    beam_size: int = 200
    max_depth: int = 4


def _safe_answer(tree: DcsTree, world: World, eps: float) -> frozenset[str]:
    try:
        return dcs.denote_answer(tree, world, eps)
    except DcsError:
        return frozenset()


def build_training_items(
    model: ParserModel,
    pairs: Sequence,
    world_provider: Callable[[object], World],
    eps: float,
) -> list[list[tuple[dict, bool]]]:
    """Per pair: (features, denotes-gold) for each current candidate tree."""
    out = []
    for pair in pairs:
        world = world_provider(pair)
        items = []
        for tree in generate_candidate_trees(pair.question, model):
            feats = featurize(pair.question, tree)
            items.append((feats, _safe_answer(tree, world, eps) == pair.gold))
        out.append(items)
    return out


def objective_and_gradient(
    weights: Mapping[tuple[str, ...], float],
    per_pair: Sequence[Sequence[tuple[dict, bool]]],
    l2: float,
) -> tuple[float, dict[tuple[str, ...], float]]:
    """Mean marginal log-likelihood of correct candidates, minus L2 penalty.

    The gradient is the expected feature vector over correct candidates minus
    the expectation over all candidates, averaged over pairs; pairs with no
    correct candidate contribute zero.
    """
    n = len(per_pair)
    if n == 0:
        raise ValueError("no training pairs")
    obj = 0.0
    grad: dict[tuple[str, ...], float] = {}
    for items in per_pair:
        if not items:
            continue
        scores = [sum(weights.get(k, 0.0) * v for k, v in f.items()) for f, _ in items]
        probs = softmax(scores)
        correct_mass = sum(p for p, (_, ok) in zip(probs, items) if ok)
        if correct_mass <= 0.0:
            continue
        obj += math.log(correct_mass)
        for p, (feats, ok) in zip(probs, items):
            delta = (p / correct_mass if ok else 0.0) - p
            if delta:
                for k, v in feats.items():
                    grad[k] = grad.get(k, 0.0) + delta * v
    obj /= n
    for k in grad:
        grad[k] /= n
    for k, w in weights.items():
        obj -= 0.5 * l2 * w * w
        grad[k] = grad.get(k, 0.0) - l2 * w
    return obj, grad


def train(
    pairs: Sequence,
    world_provider: Callable[[object], World],
    config: TrainConfig = TrainConfig(),
    lexicon: Lexicon | None = None,
) -> tuple[ParserModel, list[dict]]:
    """Alternate beam regeneration with gradient ascent; returns model + history."""
    if not pairs:
        raise ValueError("no training pairs")
    if lexicon is None:
        worlds, seen = [], set()
        for p in pairs:
            w = world_provider(p)
            if id(w) not in seen:
                seen.add(id(w))
                worlds.append(w)
        lexicon = build_lexicon(
            pairs,
            categories=sorted(set().union(*(w.categories for w in worlds))),
            colors=sorted(set().union(*(w.colors for w in worlds))),
            room_types=sorted(set().union(*(w.room_types for w in worlds))),
        )
    model = ParserModel(
        lexicon,
        {},
        beam_size=config.beam_size,
        max_depth=config.max_depth,
        fallback_answer=most_popular_answer(p.gold for p in pairs),
    )
    history = []
    for epoch in range(config.epochs):
        per_pair = build_training_items(model, pairs, world_provider, config.eps)
        uncovered = sum(1 for items in per_pair if not any(ok for _, ok in items))
        if epoch == 0 and uncovered:
            log.warning("%d of %d pairs have no gold-denoting candidate", uncovered, len(pairs))
        for _ in range(config.steps_per_epoch):
            _, grad = objective_and_gradient(model.weights, per_pair, config.l2)
            for k, g in grad.items():
                model.weights[k] = model.weights.get(k, 0.0) + config.step * g
        objective, _ = objective_and_gradient(model.weights, per_pair, config.l2)
        correct = sum(
            1
            for pair in pairs
            if answer_single_world(model, pair.question, world_provider(pair), config.eps).answer
            == pair.gold
        )
        history.append(
            {
                "epoch": epoch,
                "objective": objective,
                "train_accuracy": 100.0 * correct / len(pairs),
                "uncovered": uncovered,
            }
        )
    return model, history


# --- answering ------------------------------------------------------------------

@dataclass(frozen=True)
class AnswerResult:
    answer: frozenset[str]
    posterior: dict
    parsed: bool  # False when no candidates and the fallback answer was used


def _argmax_answer(posterior: Mapping[frozenset, float]) -> frozenset[str]:
    return min(posterior, key=lambda a: (-posterior[a], format_answer(a)))


def answer_single_world(
    model: ParserModel, question: str, world: World, eps: float = DEFAULT_EPS
) -> AnswerResult:
    """Argmax of P(answer | question, world), marginalizing over candidate trees."""
    candidates = generate_candidate_trees(question, model)
    if not candidates:
        return AnswerResult(model.fallback_answer, {}, False)
    posterior: dict[frozenset, float] = {}
    for tree, p in tree_distribution(model, question, candidates):
        answer = _safe_answer(tree, world, eps)
        posterior[answer] = posterior.get(answer, 0.0) + p
    return AnswerResult(_argmax_answer(posterior), posterior, True)


def answer_multi_world(
    model: ParserModel,
    question: str,
    worlds: Sequence[World],
    eps: float = DEFAULT_EPS,
) -> AnswerResult:
    """Eq.-2 style answer: marginalize over sampled worlds (uniform 1/N weight)
    and candidate trees; per-world terms are independent."""
    if not worlds:
        raise ValueError("no worlds")
    candidates = generate_candidate_trees(question, model)
    if not candidates:
        return AnswerResult(model.fallback_answer, {}, False)
    dist = tree_distribution(model, question, candidates)
    # identical sampled worlds share one evaluation
    groups: dict[tuple, list] = {}
    order = []
    for w in worlds:
        key = (w.objects, w.scenes)
        if key not in groups:
            groups[key] = [w, 0]
            order.append(key)
        groups[key][1] += 1
    posterior: dict[frozenset, float] = {}
    n = len(worlds)
    for key in order:
        world, mult = groups[key]
        for tree, p in dist:
            answer = _safe_answer(tree, world, eps)
            posterior[answer] = posterior.get(answer, 0.0) + p * mult / n
    return AnswerResult(_argmax_answer(posterior), posterior, True)


# --- model file round-trip --------------------------------------------------------

def save_model(model: ParserModel, path):
    """Line-oriented model file: '# key value' header then 'feature TAB weight'."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# beam_size {model.beam_size}\n")
        fh.write(f"# max_depth {model.max_depth}\n")
        fh.write(f"# fallback {format_answer(model.fallback_answer)}\n")
        for key in sorted(model.weights):
            fh.write("|".join(key) + "\t" + repr(model.weights[key]) + "\n")


def load_model(path, lexicon: Lexicon) -> ParserModel:
    beam_size, max_depth = 200, 4
    fallback: frozenset[str] = frozenset()
    weights: dict[tuple[str, ...], float] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split(" ", 1)
                if parts[0] == "beam_size":
                    beam_size = int(parts[1])
                elif parts[0] == "max_depth":
                    max_depth = int(parts[1])
                elif parts[0] == "fallback":
                    fallback = dcs.parse_answer(parts[1]) if len(parts) > 1 else frozenset()
                continue
            key_str, _, weight = line.partition("\t")
            weights[tuple(key_str.split("|"))] = float(weight)
    return ParserModel(lexicon, weights, beam_size, max_depth, fallback)
