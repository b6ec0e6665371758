"""Command-line interface.

Subcommands: build-graph, train, score, merge, eval, run, synth, report.
Each takes --config plus repeatable --set key=value overrides.  On
failure, one machine-parsable line ``error:<category>: <message>`` goes
to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .errors import RelembedError
from .synth import SyntheticSpec, generate_eval_bundle, generate_synthetic, peaked_mapping


def _add_config_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )


def _load(args) -> pipeline.PipelineConfig:
    return pipeline.load_config(args.config, args.overrides)


def cmd_build_graph(args) -> None:
    cfg = _load(args)
    graph = pipeline.stage_graph(cfg, rebuild=True)
    print(f"graph: {len(graph.textual)} textual x {len(graph.kb)} kb relations, {graph.num_edges} edges")


def cmd_train(args) -> None:
    cfg = _load(args)
    graph = pipeline.stage_graph(cfg, rebuild=False)
    model = pipeline.stage_train(cfg, graph, rebuild=True)
    print(f"trained {cfg.objective} model: {len(model.vocab)} tokens, {model.num_relations} relations")


def cmd_score(args) -> None:
    cfg = _load(args)
    graph = pipeline.stage_graph(cfg, rebuild=False)
    model = pipeline.stage_train(cfg, graph, rebuild=False)
    scored = pipeline.stage_score(cfg, model, rebuild=True)
    print(f"scored {len(scored)} candidates")


def cmd_merge(args) -> None:
    cfg = _load(args)
    graph = pipeline.stage_graph(cfg, rebuild=False)
    model = pipeline.stage_train(cfg, graph, rebuild=False)
    scored = pipeline.stage_score(cfg, model, rebuild=False)
    mm, rows = pipeline.stage_merge(cfg, scored, model.kb_names, rebuild=True)
    print(f"merge model: w1={mm.w1:.4f} w2={mm.w2:.4f} cap={mm.cap:.4f}; ranked {len(rows)} candidates")


def cmd_eval(args) -> None:
    cfg = _load(args)
    merged_path = cfg.out(f"merged_{cfg.objective}.tsv")
    if merged_path.exists():
        rows = pipeline.read_merged_tsv(merged_path)
    else:
        graph = pipeline.stage_graph(cfg, rebuild=False)
        model = pipeline.stage_train(cfg, graph, rebuild=False)
        scored = pipeline.stage_score(cfg, model, rebuild=False)
        _, rows = pipeline.stage_merge(cfg, scored, model.kb_names, rebuild=True)
    result = pipeline.stage_eval(cfg, rows)
    summary = "  ".join(f"P@{n}={p:.3f}" for n, p in sorted(result["precision_at_n"].items()))
    print(summary or "no P@N values within ranked-list length")


def cmd_run(args) -> None:
    cfg = _load(args)
    artifacts = pipeline.run_pipeline(cfg)
    for name in sorted(artifacts):
        print(f"{name}\t{artifacts[name]}")


def cmd_report(args) -> None:
    cfg = _load(args)
    outputs = pipeline.emit_report(cfg)
    print((cfg.out("report.txt")).read_text(), end="")
    for name in sorted(outputs):
        print(f"{name}\t{outputs[name]}")


def cmd_synth(args) -> None:
    mapping = peaked_mapping(args.textual_relations, args.kb_relations, seed=args.seed)
    spec = SyntheticSpec(
        num_kb_relations=args.kb_relations,
        num_textual_relations=args.textual_relations,
        true_mapping=mapping,
        noise_rate=args.noise_rate,
        num_entity_pairs=args.entity_pairs,
        num_sentences=args.sentences,
        seed=args.seed,
        skew=args.skew,
    )
    if args.bundle:
        paths = generate_eval_bundle(
            spec,
            args.output_dir,
            holdout_fraction=args.holdout_fraction,
            base_informative=args.base_informative,
        )
    else:
        paths = generate_synthetic(spec, args.output_dir)
    for name in sorted(paths):
        print(f"{name}\t{paths[name]}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relembed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_text in (
        ("build-graph", cmd_build_graph, "build and normalize the relation graph"),
        ("train", cmd_train, "train the embedding model on the graph"),
        ("score", cmd_score, "score candidates with the trained model"),
        ("merge", cmd_merge, "fit the score blend and rank candidates"),
        ("eval", cmd_eval, "held-out PR curve and precision at N"),
        ("run", cmd_run, "all stages in order, with a run manifest"),
        ("report", cmd_report, "side-by-side report over available variants"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_args(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("synth", help="generate a synthetic distant-supervision dataset")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--kb-relations", type=int, default=4)
    p.add_argument("--textual-relations", type=int, default=12)
    p.add_argument("--entity-pairs", type=int, default=300)
    p.add_argument("--sentences", type=int, default=3000)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--skew", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bundle", action="store_true", help="also emit holdout/context/base-score files")
    p.add_argument("--holdout-fraction", type=float, default=0.2)
    p.add_argument("--base-informative", type=float, default=0.5)
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except RelembedError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
