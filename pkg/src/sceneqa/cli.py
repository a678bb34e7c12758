"""Command-line front end binding the modules into reproducible runs.

All randomness flows from --seed; identical inputs, config and seed produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import corpus, dcs, metrics, semparse, worlds
from .scene import DEFAULT_EPS

log = logging.getLogger(__name__)

_MODES = ("single", "multi")
_WORLD_SOURCES = ("human", "auto")


@dataclass
class RunConfig:
    eps: float = DEFAULT_EPS
    beam_size: int = 200
    max_depth: int = 4
    epochs: int = 30
    step: float = 0.1
    l2: float = 1e-3
    n_worlds: int = 25
    k_batches: int = 3
    seed: int = 0
    mode: str = "single"
    world_source: str = "human"

    def __post_init__(self):
        for name in ("beam_size", "max_depth", "epochs", "n_worlds", "k_batches"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.world_source not in _WORLD_SOURCES:
            raise ValueError(f"world source must be one of {_WORLD_SOURCES}")


def default_taxonomy_path() -> Path:
    return Path(str(resources.files("sceneqa").joinpath("data/taxonomy.tsv")))


def _load_vocab(args):
    """Vocabulary for the lexicon: facts corpus and/or segmentation label space."""
    categories, colors, room_types = set(), set(), set()
    fact_corpus = None
    if getattr(args, "facts", None):
        fact_corpus = corpus.load_facts(args.facts, getattr(args, "scenes", None))
        world = fact_corpus.world()
        categories |= world.categories
        colors |= world.colors
        room_types |= world.room_types
    if getattr(args, "segmentations", None):
        for seg in corpus.load_segmentations(args.segmentations):
            categories.update(cat for cat, _ in seg.labels)
            colors.add(seg.color)
    if getattr(args, "scenes", None):
        room_types.update(s.room_type for s in corpus.load_scenes(args.scenes).values())
    return fact_corpus, categories, colors, room_types


def _cmd_gen_synthetic(args) -> int:
    fact_corpus = corpus.load_facts(args.facts, args.scenes)
    counts = corpus.train_counts() if args.profile == "train" else corpus.test_counts()
    pairs = corpus.generate_synthetic_qa(
        fact_corpus.world(), counts=counts, seed=args.seed, eps=args.eps
    )
    corpus.write_qa(args.out, pairs)
    print(f"wrote {len(pairs)} question-answer pairs to {args.out}")
    return 0


def _make_world_provider(args, pairs, fact_corpus):
    cfg_source = args.world_source
    if cfg_source == "auto":
        segments = corpus.load_segmentations(args.segmentations)
        scene_facts = ()
        if args.scenes:
            scene_facts = tuple(corpus.load_scenes(args.scenes).values())
        world = worlds.most_confident_world(segments, scene_facts)
        return lambda pair: world
    world = fact_corpus.world()
    if not args.batch_retrieval:
        return lambda pair: world
    # batch approximation: per single-image pair, union the image's own batch
    # with its k-1 nearest training batches by boolean TF.IDF
    fact_batches = [
        worlds.batch_of_facts(img, *fact_corpus.batch(img)) for img in fact_corpus.images
    ]
    per_scope: dict[str, object] = {}
    for pair in pairs:
        if pair.scope is None or pair.scope in per_scope or pair.scope not in fact_corpus.images:
            continue
        query = worlds.batch_of_facts(pair.scope, *fact_corpus.batch(pair.scope))
        others = [b for b in fact_batches if b.batch_id != pair.scope]
        chosen = [pair.scope]
        if others and args.k_batches > 1:
            chosen += worlds.tfidf_select_batches(query, others, args.k_batches - 1)
        per_scope[pair.scope] = worlds.build_training_world(
            [fact_corpus.batch(img) for img in chosen]
        )
    return lambda pair: per_scope.get(pair.scope, world)


def _cmd_train(args) -> int:
    fact_corpus, categories, colors, room_types = _load_vocab(args)
    pairs = corpus.load_qa(args.qa)
    lexicon = semparse.build_lexicon(pairs, categories, colors, room_types)
    provider = _make_world_provider(args, pairs, fact_corpus)
    config = semparse.TrainConfig(
        epochs=args.epochs,
        step=args.step,
        l2=args.l2,
        steps_per_epoch=args.steps_per_epoch,
        eps=args.eps,
        beam_size=args.beam_size,
        max_depth=args.max_depth,
    )
    model, history = semparse.train(pairs, provider, config, lexicon)
    semparse.save_model(model, args.out)
    log_path = args.log or args.out + ".log"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_accuracy\tobjective\tuncovered\n")
        for row in history:
            fh.write(
                f"{row['epoch']}\t{row['train_accuracy']:.2f}"
                f"\t{row['objective']!r}\t{row['uncovered']}\n"
            )
    print(f"wrote model to {args.out}")
    print(f"final train accuracy {history[-1]['train_accuracy']:.2f}")
    return 0


def _cmd_answer(args) -> int:
    fact_corpus, categories, colors, room_types = _load_vocab(args)
    pairs = corpus.load_qa(args.qa)
    lexicon = semparse.build_lexicon(pairs, categories, colors, room_types)
    model = semparse.load_model(args.model, lexicon)
    scene_facts = ()
    if args.scenes:
        scene_facts = tuple(corpus.load_scenes(args.scenes).values())
    if args.mode == "multi":
        segments = corpus.load_segmentations(args.segmentations)
        sampled = worlds.sample_worlds(segments, args.n_worlds, args.seed, scene_facts)
        answers = [
            semparse.answer_multi_world(model, p.question, sampled, args.eps).answer
            for p in pairs
        ]
    else:
        if args.world_source == "auto":
            segments = corpus.load_segmentations(args.segmentations)
            world = worlds.most_confident_world(segments, scene_facts)
        else:
            world = fact_corpus.world()
        answers = [
            semparse.answer_single_world(model, p.question, world, args.eps).answer
            for p in pairs
        ]
    for a in answers:
        print(dcs.format_answer(a))
    if args.out:
        corpus.write_answers(args.out, answers)
    return 0


def _cmd_eval(args) -> int:
    preds = corpus.load_answers(args.preds)
    if args.golds:
        golds = corpus.load_answers(args.golds)
    else:
        golds = [p.gold for p in corpus.load_qa(args.qa)]
    tax = metrics.Taxonomy.from_file(args.taxonomy or default_taxonomy_path())
    print(f"accuracy\t{metrics.accuracy_score(preds, golds):.2f}")
    thresholds = [float(t) for t in args.thresholds.split(",") if t.strip() != ""]
    for t in thresholds:
        print(f"wups@{t:.2f}\t{metrics.wups_score(preds, golds, tax, t):.2f}")
    if args.curve_out:
        curve_ts = [i / 10 for i in range(11)]
        with open(args.curve_out, "w", encoding="utf-8") as fh:
            for t, score in metrics.wups_curve(preds, golds, tax, curve_ts):
                fh.write(f"{t:.2f}\t{score:.2f}\n")
    return 0


def _cmd_sample_worlds(args) -> int:
    segments = corpus.load_segmentations(args.segmentations)
    scene_facts = ()
    if args.scenes:
        scene_facts = tuple(corpus.load_scenes(args.scenes).values())
    sampled = worlds.sample_worlds(segments, args.n_worlds, args.seed, scene_facts)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, w in enumerate(sampled):
        corpus.write_facts(out_dir / f"world_{i:03d}.tsv", w.objects, log_weight=w.log_weight)
    print(f"wrote {len(sampled)} worlds to {out_dir}")
    return 0


def _cmd_wup(args) -> int:
    tax = metrics.Taxonomy.from_file(args.taxonomy or default_taxonomy_path())
    print(f"{metrics.wup(args.term_a, args.term_b, tax):.2f}")
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneqa",
        description="Question answering about indoor scenes over possible fact worlds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, facts=False, scenes=False):
        p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="closeness slack in meters")
        if facts:
            p.add_argument("--facts", help="fact file (tab-separated object tuples)")
        if scenes:
            p.add_argument("--scenes", help="scene file (image_id TAB room_type)")

    p = sub.add_parser("gen-synthetic", help="generate template question-answer pairs")
    common(p, facts=True, scenes=True)
    p.add_argument("--profile", choices=("train", "test"), default="train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("train", help="train the parser from question-answer pairs")
    common(p, facts=True, scenes=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", help="per-epoch accuracy log (default: <out>.log)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--steps-per-epoch", type=int, default=5)
    p.add_argument("--beam-size", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--world-source", choices=_WORLD_SOURCES, default="human")
    p.add_argument("--segmentations", help="needed with --world-source auto")
    p.add_argument("--batch-retrieval", action="store_true", help="TF.IDF batch approximation")
    p.add_argument("--k-batches", type=int, default=3)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("answer", help="answer questions with a trained model")
    common(p, facts=True, scenes=True)
    p.add_argument("--model", required=True)
    p.add_argument("--qa", required=True, help="questions (answer lines are ignored)")
    p.add_argument("--mode", choices=_MODES, default="single")
    p.add_argument("--world-source", choices=_WORLD_SOURCES, default="human")
    p.add_argument("--segmentations")
    p.add_argument("--n-worlds", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write answers to this file")
    p.set_defaults(func=_cmd_answer)

    p = sub.add_parser("eval", help="score predictions with accuracy and WUPS")
    p.add_argument("--preds", required=True, help="one answer per line")
    p.add_argument("--golds", help="one answer per line")
    p.add_argument("--qa", help="gold answers from a question-answer file")
    p.add_argument("--taxonomy", help="child TAB parent file (default: bundled)")
    p.add_argument("--thresholds", default="0,0.9")
    p.add_argument("--curve-out", help="write the full threshold curve here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sample-worlds", help="sample worlds from segmentation uncertainty")
    common(p, scenes=True)
    p.add_argument("--segmentations", required=True)
    p.add_argument("--n-worlds", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sample_worlds)

    p = sub.add_parser("wup", help="print the Wu-Palmer similarity of two terms")
    p.add_argument("term_a")
    p.add_argument("term_b")
    p.add_argument("--taxonomy", help="child TAB parent file (default: bundled)")
    p.set_defaults(func=_cmd_wup)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "eval" and not (args.golds or args.qa):
        parser.error("eval needs --golds or --qa")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
        return 2
    except (corpus.CorpusError, metrics.TaxonomyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
