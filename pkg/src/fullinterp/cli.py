"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (including usage errors), 2 runtime
failure.  Every output file depends only on the inputs and ``--seed``;
``--threads`` changes speed, never bytes.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import io
from .candidates import CandidateConfig, extract_candidates
from .errors import FullInterpError, InvalidArgument, ValidationError
from .evaluation import ComparisonParams, compare_relation_sets, evaluate_dataset
from .forest import ForestParams
from .inference import SearchParams, interpret
from .intervention import InterventionSpec, measure_intervention
from .pipeline import interpret_many, train_model
from .svg import render_overlay
from .synthetic import SYNTHETIC_CLASSES, generate_planted_corpus, get_class

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "config": None}


class UsageError(InvalidArgument):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {v}")
    return v


def _optional_int(text: str):
    """Positive integer, or ``inf`` for no limit."""
    if text.lower() in ("inf", "none", "all"):
        return None
    return _positive_int(text)


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    p.add_argument("--threads", type=_positive_int, default=d, help="worker threads (default 1)")
    p.add_argument("--config", default=d, help="JSON file of flag defaults; explicit flags win")
    return p


def _search_flags(p):
    p.add_argument("--beam-width", type=_optional_int, default=50)
    p.add_argument("--rescore-k", type=_optional_int, default=25)
    p.add_argument("--unary-z-max", type=float, default=4.0)


def _forest_flags(p):
    p.add_argument("--negatives", type=_positive_int, default=25000, help="sampled negative configurations")
    p.add_argument("--positives-cap", type=_positive_int, default=None, help="use at most this many positives")
    p.add_argument("--trees", type=_positive_int, default=100)
    p.add_argument("--depth", type=_positive_int, default=12)
    p.add_argument("--min-leaf", type=_positive_int, default=2)


def build_parser() -> _Parser:
    top = _Parser(prog="fullinterp", description=__doc__.splitlines()[0], parents=[_global_flags(True)])
    sub = top.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    g = _global_flags(True)

    p = sub.add_parser("candidates", parents=[g], help="extract candidate primitives from an image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.add_argument("--allow-png", action="store_true")

    p = sub.add_parser("train", parents=[g], help="fit a model on a dataset manifest")
    p.add_argument("--data", required=True, help="dataset manifest")
    p.add_argument("--schema", help="schema file (default: the manifest's)")
    p.add_argument("--out", required=True, help="model file to write")
    _forest_flags(p)
    p.add_argument("--allow-png", action="store_true")

    p = sub.add_parser("interpret", parents=[g], help="interpret one image with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--schema", help="check the model against this schema")
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    _search_flags(p)
    p.add_argument("--allow-png", action="store_true")

    p = sub.add_parser("evaluate", parents=[g], help="mean IoU of a model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--split", choices=io.SPLITS, default="test")
    p.add_argument("--out", required=True)
    _search_flags(p)
    p.add_argument("--allow-png", action="store_true")

    p = sub.add_parser("compare", parents=[g], help="train basic and extended models and compare them")
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--out", required=True)
    _forest_flags(p)
    _search_flags(p)
    p.add_argument("--allow-png", action="store_true")

    p = sub.add_parser("intervene", parents=[g], help="apply a relation-ablating transform and rescore")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--spec", help="intervention spec JSON")
    p.add_argument("--target", help="relation the transform removes")
    p.add_argument("--recolor", nargs="+", metavar="X,Y", help="pixels to recolor")
    p.add_argument("--sketch", type=float, metavar="AMPLITUDE", help="render a perturbed sketch")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out", required=True)
    _search_flags(p)
    p.add_argument("--allow-png", action="store_true")

    p = sub.add_parser("synth", parents=[g], help="generate a planted synthetic dataset")
    p.add_argument("--class", dest="class_name", choices=sorted(SYNTHETIC_CLASSES), default="head")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-pos", type=_positive_int, default=120, help="training positives")
    p.add_argument("--n-test", type=int, default=40, help="test positives")
    p.add_argument("--n-neg", type=int, default=60, help="negative patches")
    p.add_argument("--noise", type=float, default=0.05)
    return top


# -- config files -------------------------------------------------------------


def _subparsers(top: argparse.ArgumentParser) -> dict:
    for a in top._actions:
        if isinstance(a, argparse._SubParsersAction):
            return dict(a.choices)
    return {}


def _dests(parser: argparse.ArgumentParser) -> dict:
    return {a.dest: a for a in parser._actions if a.dest not in ("help", argparse.SUPPRESS)}


def _load_config(path: str, top: argparse.ArgumentParser, command: str) -> dict:
    doc = io.load_json(path)
    if not isinstance(doc, dict):
        raise InvalidArgument(f"{path}: config must be a JSON object of flag defaults")
    subs = _subparsers(top)
    known = set(GLOBAL_DEFAULTS)
    for sp in subs.values():
        known |= set(_dests(sp))
    mine = _dests(subs[command])
    out = {}
    for key, value in doc.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest == "class":
            dest = "class_name"
        if dest not in known or dest == "config":
            raise InvalidArgument(f"{path}: unknown config key {key!r}")
        if dest not in mine:
            continue  # belongs to another command
        action = mine[dest]
        if action.type is not None and value is not None and not isinstance(value, (list, bool)):
            try:
                value = action.type(str(value))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise InvalidArgument(f"{path}: key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise InvalidArgument(f"{path}: key {key!r}: {value!r} not in {sorted(action.choices)}")
        out[dest] = value
    return out


def parse_args(argv) -> argparse.Namespace:
    top = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    subs = _subparsers(top)
    command = next((t for t in rest if t in subs), None)
    defaults = {}
    if known.config and command is not None:
        defaults = _load_config(known.config, top, command)
        sub = subs[command]
        for a in sub._actions:
            if a.dest in defaults:
                a.required = False
        sub.set_defaults(**{k: v for k, v in defaults.items() if k not in GLOBAL_DEFAULTS})
    ns = top.parse_args(argv)
    for k, v in GLOBAL_DEFAULTS.items():
        if not hasattr(ns, k):
            setattr(ns, k, defaults.get(k, v))
    return ns


# -- commands -----------------------------------------------------------------


def _search(ns) -> SearchParams:
    return SearchParams(ns.beam_width, ns.rescore_k, ns.unary_z_max)


def _forest(ns) -> ForestParams:
    return ForestParams(n_trees=ns.trees, max_depth=ns.depth, min_leaf=ns.min_leaf, seed=ns.seed)


def _dataset(ns):
    schema = io.load_schema(ns.schema) if ns.schema else None
    return io.load_dataset(ns.data, schema, ns.allow_png)


def _train_split(ds, cap):
    if len(ds.train) < 2:
        raise InvalidArgument(f"training needs >= 2 annotated positives, manifest has {len(ds.train)}")
    return ds.train if cap is None else ds.train[:cap]


def cmd_candidates(ns) -> int:
    img = io.load_image(ns.image, ns.allow_png)
    cands = extract_candidates(img)
    io.save_json(io.candidates_to_dict(cands), ns.out)
    if ns.svg:
        cfg = {f"p{i}": p for i, p in enumerate(cands.points)}
        cfg.update({f"c{i}": c for i, c in enumerate(cands.contours)})
        render_overlay(img, cfg, ns.svg)
    print(f"{len(cands.points)} points, {len(cands.contours)} contours, {len(cands.regions)} regions -> {ns.out}")
    return EXIT_OK


def cmd_train(ns) -> int:
    ds = _dataset(ns)
    positives = _train_split(ds, ns.positives_cap)
    model = train_model(ds.schema, positives, ds.negatives, ns.negatives, _forest(ns), n_jobs=ns.threads)
    io.save_model(model, ns.out)
    print(f"trained {model.forest.n_trees} trees on {len(positives)} positives, {ns.negatives} negatives -> {ns.out}")
    return EXIT_OK


def _model(ns):
    schema = io.load_schema(ns.schema) if getattr(ns, "schema", None) else None
    return io.load_model(ns.model, schema)


def cmd_interpret(ns) -> int:
    model = _model(ns)
    img = io.load_image(ns.image, ns.allow_png)
    res = interpret(img, model.schema, model.forest, model.unary_stats, _search(ns))
    io.save_json(io.result_to_dict(res, os.path.basename(ns.image)), ns.out)
    if ns.svg:
        render_overlay(img, res, ns.svg)
    print(f"score {res.score:.6f} -> {ns.out}")
    return EXIT_OK


def cmd_evaluate(ns) -> int:
    model = _model(ns)
    ds = io.load_dataset(ns.data, model.schema, ns.allow_png)
    items = ds.test if ns.split == "test" else ds.train
    if not items:
        raise InvalidArgument(f"{ns.data}: the {ns.split} split is empty")
    results = interpret_many(model, [p.image for p in items], _search(ns), n_jobs=ns.threads)
    report = evaluate_dataset(
        results,
        [p.parts for p in items],
        [(p.image.width, p.image.height) for p in items],
        tag=model.schema.relation_set,
    )
    report.config.update({"split": ns.split, "beam_width": ns.beam_width, "rescore_k": ns.rescore_k,
                          "unary_z_max": ns.unary_z_max, "uninterpretable": sum(r is None for r in results)})
    io.save_json(report.to_dict(), ns.out)
    print(report.table())
    return EXIT_OK


def cmd_compare(ns) -> int:
    ds = _dataset(ns)
    if not ds.test:
        raise InvalidArgument(f"{ns.data}: the test split is empty")
    params = ComparisonParams(ns.negatives, _forest(ns), _search(ns), CandidateConfig(), ns.threads)
    basic, extended = compare_relation_sets(ds.schema, _train_split(ds, ns.positives_cap), ds.negatives, ds.test, params)
    doc = {
        "format": "fullinterp-comparison",
        "version": io.FORMAT_VERSION,
        "basic": basic.to_dict(),
        "extended": extended.to_dict(),
        "extended_minus_basic": extended.dataset_mean - basic.dataset_mean,
    }
    io.save_json(doc, ns.out)
    print(basic.table())
    print(extended.table())
    print(f"extended - basic: {doc['extended_minus_basic']:+.4f}")
    return EXIT_OK


def _pixel_arg(text: str) -> tuple:
    try:
        x, y = text.split(",")
        return int(x), int(y)
    except ValueError:
        raise InvalidArgument(f"--recolor expects X,Y integer pairs, got {text!r}") from None


def _intervention_spec(ns) -> InterventionSpec:
    given = [ns.spec is not None, ns.recolor is not None, ns.sketch is not None]
    if sum(given) != 1:
        raise InvalidArgument("intervene needs exactly one of --spec, --recolor, --sketch")
    if ns.spec:
        doc = io.load_json(ns.spec)
        try:
            if isinstance(doc, dict) and "seed" not in doc:
                doc = dict(doc, seed=ns.seed)
            return InterventionSpec.from_dict(doc)
        except ValidationError as exc:
            raise type(exc)(f"{ns.spec}: {exc}") from None
    if ns.recolor is not None:
        return InterventionSpec("recolor_pixels", ns.target or "intensity_extremum",
                                tuple(_pixel_arg(t) for t in ns.recolor), seed=ns.seed)
    return InterventionSpec("render_sketch", ns.target or "line_circle_deviation", amplitude=ns.sketch, seed=ns.seed)


def cmd_intervene(ns) -> int:
    spec = _intervention_spec(ns)
    model = _model(ns)
    img = io.load_image(ns.image, ns.allow_png)
    report, out = measure_intervention(img, spec, model.schema, model.forest, model.unary_stats, _search(ns))
    io.save_image(out, ns.out_image)
    doc = report.to_dict()
    doc["spec"] = spec.to_dict()
    io.save_json(doc, ns.out)
    print(f"score {report.original_score:.6f} -> {report.transformed_score:.6f} (drop {report.delta:+.6f})")
    return EXIT_OK


def cmd_synth(ns) -> int:
    if ns.n_test < 0 or ns.n_neg < 0:
        raise InvalidArgument("--n-test and --n-neg must be >= 0")
    cls = get_class(ns.class_name)
    pos, neg = generate_planted_corpus(cls, ns.n_pos + ns.n_test, ns.n_neg, ns.noise, ns.seed)
    root = ns.out
    os.makedirs(root, exist_ok=True)
    io.save_schema(cls.schema, os.path.join(root, "schema.json"))
    items = []
    for i, p in enumerate(pos):
        split = "train" if i < ns.n_pos else "test"
        stem = f"{split}/pos_{i:04d}"
        io.save_image(p.image, os.path.join(root, stem + ".pgm"))
        io.save_annotation(io.AnnotationDoc(f"pos_{i:04d}.pgm", p.parts), os.path.join(root, stem + ".json"))
        items.append((stem + ".pgm", stem + ".json", split))
    negs = []
    for i, img in enumerate(neg):
        rel = f"neg/neg_{i:04d}.pgm"
        io.save_image(img, os.path.join(root, rel))
        negs.append(rel)
    io.save_manifest(io.DatasetManifest(cls.name, "schema.json", items, negs), os.path.join(root, "manifest.json"))
    print(f"wrote {len(pos)} positives ({ns.n_pos} train, {ns.n_test} test) and {len(neg)} negatives to {root}")
    return EXIT_OK


COMMANDS = {
    "candidates": cmd_candidates,
    "train": cmd_train,
    "interpret": cmd_interpret,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "intervene": cmd_intervene,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = parse_args(argv)
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[ns.command](ns)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FullInterpError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
