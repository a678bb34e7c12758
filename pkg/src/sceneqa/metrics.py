"""Answer-quality metrics: Wu-Palmer similarity over a noun taxonomy, the
set-based WUPS score with threshold down-weighting, plain accuracy, and the
most-popular-answer baseline.

Answers are frozensets of lowercase terms. Taxonomy nodes are sense ids in
the WordNet style ("stove.n.02"); a term resolves to every sense whose lemma
matches it, and term-level similarity is the maximum over sense pairs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .dcs import format_answer
from .text import normalize, word_variants

_SENSE_SUFFIX = re.compile(r"\.[nvar]\.\d+$")


class TaxonomyError(ValueError):
    pass


def _lemma(node: str) -> str:
    return _SENSE_SUFFIX.sub("", node).replace("_", " ")


@dataclass
class Taxonomy:
    """A rooted is-a DAG over sense nodes; depth is the longest root path."""

    parents: dict[str, frozenset[str]]
    root: str
    _lemmas: dict[str, frozenset[str]] = field(default_factory=dict, repr=False)
    _depths: dict[str, int] = field(default_factory=dict, repr=False)
    _ancestors: dict[str, frozenset[str]] = field(default_factory=dict, repr=False)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]]) -> "Taxonomy":
        parents: dict[str, set[str]] = {}
        nodes: set[str] = set()
        for child, parent in edges:
            child, parent = child.strip(), parent.strip()
            if not child or not parent:
                raise TaxonomyError("empty node name in taxonomy edge")
            nodes.update((child, parent))
            parents.setdefault(child, set()).add(parent)
        roots = sorted(nodes - set(parents))
        if len(roots) != 1:
            raise TaxonomyError(f"taxonomy must have exactly one root, found {roots}")
        tax = cls({n: frozenset(ps) for n, ps in parents.items()}, roots[0])
        lemmas: dict[str, set[str]] = {}
        for n in nodes:
            lemmas.setdefault(_lemma(n).lower(), set()).add(n)
        tax._lemmas = {k: frozenset(v) for k, v in lemmas.items()}
        for n in sorted(nodes):
            tax.depth(n)  # also validates acyclicity and connectivity
        return tax

    @classmethod
    def from_file(cls, path) -> "Taxonomy":
        edges = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    raise TaxonomyError(f"{path}:{lineno}: expected 'child TAB parent'")
                edges.append((fields[0], fields[1]))
        return cls.from_edges(edges)

    @property
    def nodes(self) -> frozenset[str]:
        return frozenset(self.parents) | {self.root}

    def depth(self, node: str, _stack: tuple = ()) -> int:
        if node in self._depths:
            return self._depths[node]
        if node in _stack:
            raise TaxonomyError(f"taxonomy cycle through {node}")
        if node == self.root:
            d = 1
        elif node not in self.parents:
            raise TaxonomyError(f"unknown taxonomy node: {node}")
        else:
            d = 1 + max(self.depth(p, _stack + (node,)) for p in self.parents[node])
        self._depths[node] = d
        return d

    def ancestors(self, node: str) -> frozenset[str]:
        """Ancestors of a node, including the node itself."""
        cached = self._ancestors.get(node)
        if cached is None:
            out = {node}
            for p in self.parents.get(node, ()):
                out |= self.ancestors(p)
            cached = frozenset(out)
            self._ancestors[node] = cached
        return cached

    def senses(self, term: str) -> frozenset[str]:
        """Sense nodes for a term: exact node id, then lemma, then number variants."""
        term = normalize(term)
        if term in self.parents or term == self.root:
            return frozenset({term})
        for variant in word_variants(term):
            hit = self._lemmas.get(variant)
            if hit:
                return hit
        return frozenset()


def wup(a: str, b: str, tax: Taxonomy) -> float:
    """Wu-Palmer similarity 2*depth(lcs) / (depth(a)+depth(b)), maximized over
    sense pairs and common subsumers. Terms missing from the taxonomy fall
    back to string equality (1.0 if equal, else 0.0)."""
    senses_a = tax.senses(a)
    senses_b = tax.senses(b)
    if not senses_a or not senses_b:
        return 1.0 if normalize(a) == normalize(b) else 0.0
    best = 0.0
    for na in sorted(senses_a):
        da = tax.depth(na)
        anc_a = tax.ancestors(na)
        for nb in sorted(senses_b):
            common = anc_a & tax.ancestors(nb)
            if not common:
                continue
            lcs_depth = max(tax.depth(s) for s in common)
            best = max(best, 2.0 * lcs_depth / (da + tax.depth(nb)))
    return best


def _directed_product(
    xs: frozenset[str], ys: frozenset[str], tax: Taxonomy, threshold: float
) -> float:
    # max over an empty candidate set is 0 by convention
    prod = 1.0
    for x in xs:
        best = 0.0
        for y in ys:
            s = wup(x, y, tax)
            if s < threshold:
                s *= 0.1  # down-weight imprecise matches by one order of magnitude
            best = max(best, s)
        prod *= best
    return prod


def pair_wups(
    pred: frozenset[str], gold: frozenset[str], tax: Taxonomy, threshold: float
) -> float:
    """One pair's WUPS term: min of the two directed best-match products."""
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    return min(
        _directed_product(pred, gold, tax, threshold),
        _directed_product(gold, pred, tax, threshold),
    )


def wups_score(
    preds: Sequence[frozenset[str]],
    golds: Sequence[frozenset[str]],
    tax: Taxonomy,
    threshold: float,
) -> float:
    """Mean per-pair WUPS, as a percentage in [0, 100]."""
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    if not preds:
        raise ValueError("empty run")
    total = sum(pair_wups(p, g, tax, threshold) for p, g in zip(preds, golds))
    return total / len(preds) * 100.0


def accuracy_score(
    preds: Sequence[frozenset[str]], golds: Sequence[frozenset[str]]
) -> float:
    """Percentage of pairs with exact answer-set equality."""
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    if not preds:
        raise ValueError("empty run")
    hits = sum(1 for p, g in zip(preds, golds) if p == g)
    return hits / len(preds) * 100.0


def wups_curve(
    preds: Sequence[frozenset[str]],
    golds: Sequence[frozenset[str]],
    tax: Taxonomy,
    thresholds: Sequence[float],
) -> list[tuple[float, float]]:
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    return [(t, wups_score(preds, golds, tax, t)) for t in thresholds]


def most_popular_answer(golds: Iterable[frozenset[str]]) -> frozenset[str]:
    """Most frequent answer set; ties go to the smallest serialization."""
    counts: dict[frozenset[str], int] = {}
    for g in golds:
        counts[g] = counts.get(g, 0) + 1
    if not counts:
        raise ValueError("no training answers")
    return min(counts, key=lambda a: (-counts[a], format_answer(a)))


def popular_answer_baseline(pairs) -> Callable[[str], frozenset[str]]:
    """Predictor that emits the training set's most popular answer for every question."""
    answer = most_popular_answer(p.gold for p in pairs)

    def predict(question: str) -> frozenset[str]:
        return answer

    predict.answer = answer
    return predict
