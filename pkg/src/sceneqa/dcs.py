"""Logical forms as DCS trees and their set-valued evaluation against a world.

A tree node carries a predicate and edges to subtrees. Join and Bridge edges
restrict the node's own extension through witnesses in the child denotation;
Count, Superlative and Negate mark aggregate nodes that transform the single
child's denotation. Denotations are frozensets of equal-arity value tuples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .scene import DEFAULT_EPS, World, eval_spatial, query_predicate


class DcsError(ValueError):
    pass


@dataclass(frozen=True)
class Join:
    parent_arg: int  # 1-based tuple index on the node's own tuples
    child_arg: int   # 1-based tuple index on the child's tuples


@dataclass(frozen=True)
class Count:
    pass


@dataclass(frozen=True)
class Superlative:
    direction: str  # "max" | "min", measured by cuboid volume


@dataclass(frozen=True)
class Negate:
    domain: str  # "images" | "instances"


@dataclass(frozen=True)
class Bridge:
    """An implicit spatial predicate between parent and child instances."""

    via: str
    trigger: str | None = field(default=None, compare=False)


Relation = Union[Join, Count, Superlative, Negate, Bridge]

_AGGREGATES = (Count, Superlative, Negate)


@dataclass(frozen=True)
class DcsTree:
    predicate: str
    edges: tuple[tuple[Relation, "DcsTree"], ...] = ()
    # surface phrase that introduced this node; None for trace nodes
    trigger: str | None = field(default=None, compare=False)

    def depth(self) -> int:
        return 1 + max((c.depth() for _, c in self.edges), default=0)

    def __repr__(self):
        return f"DcsTree({format_tree(self)!r})"


def leaf(predicate: str, trigger: str | None = None) -> DcsTree:
    return DcsTree(predicate, (), trigger)


def with_edge(tree: DcsTree, rel: Relation, child: DcsTree) -> DcsTree:
    return DcsTree(tree.predicate, tree.edges + ((rel, child),), tree.trigger)


def count_node(child: DcsTree, trigger: str | None = None) -> DcsTree:
    return DcsTree("count", ((Count(), child),), trigger)


def superlative_node(direction: str, child: DcsTree, trigger: str | None = None) -> DcsTree:
    name = "largest" if direction == "max" else "smallest"
    return DcsTree(name, ((Superlative(direction), child),), trigger)


def negation_node(domain: str, child: DcsTree, trigger: str | None = None) -> DcsTree:
    return DcsTree("not", ((Negate(domain), child),), trigger)


def is_aggregate(tree: DcsTree) -> bool:
    return bool(tree.edges) and isinstance(tree.edges[0][0], _AGGREGATES)


def format_tree(tree: DcsTree) -> str:
    """Deterministic parenthesized prefix form, e.g. (count (table (join 1 1 (brown))))."""
    if is_aggregate(tree):
        if len(tree.edges) != 1:
            raise DcsError("aggregate node takes exactly one subtree")
        rel, child = tree.edges[0]
        if isinstance(rel, Count):
            return f"(count {format_tree(child)})"
        if isinstance(rel, Superlative):
            name = "largest" if rel.direction == "max" else "smallest"
            return f"({name} {format_tree(child)})"
        return f"(not {rel.domain} {format_tree(child)})"
    parts = [tree.predicate]
    for rel, child in tree.edges:
        if isinstance(rel, Join):
            parts.append(f"(join {rel.parent_arg} {rel.child_arg} {format_tree(child)})")
        elif isinstance(rel, Bridge):
            parts.append(f"(bridge {rel.via} {format_tree(child)})")
        else:
            raise DcsError("aggregate marker on a multi-edge node")
    return "(" + " ".join(parts) + ")"


def apply_count(denotation: frozenset) -> frozenset:
    """Collapse a denotation to the single tuple holding its cardinality."""
    return frozenset({(len(denotation),)})


def apply_superlative(denotation: frozenset, world: World, direction: str) -> frozenset:
    """Instance with extreme cuboid volume; ties go to the smallest id."""
    ids = sorted(
        {t[-1] for t in denotation if t and t[-1] in world.objects_by_id}
    )
    if not ids:
        return frozenset()
    sign = -1.0 if direction == "max" else 1.0
    best = min(ids, key=lambda i: (sign * world.objects_by_id[i].loc.volume(), i))
    return frozenset({(best,)})


def apply_negation(denotation: frozenset, world: World, domain: str) -> frozenset:
    """Complement of the denotation (projected to its last column) in the domain."""
    if domain == "images":
        universe = world.images
    elif domain == "instances":
        universe = tuple(world.objects_by_id)
    else:
        raise DcsError(f"unknown negation domain: {domain}")
    present = {t[-1] for t in denotation if t}
    return frozenset((v,) for v in universe if v not in present)


def evaluate_dcs(tree: DcsTree, world: World, eps: float = DEFAULT_EPS) -> frozenset:
    """Recursive evaluation: intersect join/bridge witnesses, apply aggregates."""
    if is_aggregate(tree):
        if len(tree.edges) != 1:
            raise DcsError("aggregate node takes exactly one subtree")
        rel, child = tree.edges[0]
        inner = evaluate_dcs(child, world, eps)
        if isinstance(rel, Count):
            return apply_count(inner)
        if isinstance(rel, Superlative):
            return apply_superlative(inner, world, rel.direction)
        return apply_negation(inner, world, rel.domain)

    values = query_predicate(world, tree.predicate, eps)
    for rel, child in tree.edges:
        if not values:
            break
        sub = evaluate_dcs(child, world, eps)
        if isinstance(rel, Join):
            arity = len(next(iter(values)))
            if not 1 <= rel.parent_arg <= arity:
                raise DcsError(f"relation arity: parent arg {rel.parent_arg} on arity {arity}")
            if sub:
                child_arity = len(next(iter(sub)))
                if not 1 <= rel.child_arg <= child_arity:
                    raise DcsError(
                        f"relation arity: child arg {rel.child_arg} on arity {child_arity}"
                    )
            keys = {t[rel.child_arg - 1] for t in sub}
            values = frozenset(v for v in values if v[rel.parent_arg - 1] in keys)
        elif isinstance(rel, Bridge):
            partners = [
                world.objects_by_id[t[0]] for t in sub if t[0] in world.objects_by_id
            ]
            kept = []
            for v in values:
                fact = world.objects_by_id.get(v[0])
                if fact is None:
                    continue
                for p in partners:
                    if (
                        p.instance_id != fact.instance_id
                        and p.image_id == fact.image_id
                        and eval_spatial(rel.via, fact.loc, p.loc, eps)
                    ):
                        kept.append(v)
                        break
            values = frozenset(kept)
        else:
            raise DcsError("aggregate marker mixed with join edges")
    return values


def term_for_value(world: World, value) -> str:
    """Map a denotation value to an answer term.

    Instance ids become their category in this world; image ids, room
    terms and numerals pass through as strings.
    """
    if isinstance(value, str) and value in world.objects_by_id:
        return world.objects_by_id[value].category
    return str(value)


def denote_answer(tree: DcsTree, world: World, eps: float = DEFAULT_EPS) -> frozenset[str]:
    """Project the final denotation onto answer terms (by each tuple's last column)."""
    denotation = evaluate_dcs(tree, world, eps)
    return frozenset(term_for_value(world, t[-1]) for t in denotation if t)


def format_answer(answer: frozenset[str]) -> str:
    return ", ".join(sorted(answer))


def parse_answer(text: str) -> frozenset[str]:
    return frozenset(t.strip().lower() for t in text.split(",") if t.strip())
