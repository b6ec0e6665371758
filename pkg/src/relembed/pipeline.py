"""End-to-end orchestration: graph -> train -> score -> merge -> eval.

Configuration is a flat ``key = value`` text file (CLI overrides win).
Every stage persists its artifact under the output directory and can be
resumed from disk; a run manifest records the config hash, the seed and a
checksum per data artifact.  All randomness flows from the single config
seed through named derived seeds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

from . import evaluate
from .errors import ConfigError, DataError, InputError
from .graph import (
    RelationGraph,
    build_graph_from_files,
    normalize_conditional,
    normalize_ppmi,
    read_graph_tsv,
    read_kb_facts,
    split_edges,
    write_graph_tsv,
)
from .merge import (
    Candidate,
    MergeModel,
    build_merge_examples,
    negative_sample,
    rank_candidates,
    read_base_scores,
    read_contexts,
    read_merged_tsv,
    read_scores_tsv,
    score_candidates,
    train_merge,
    write_merged_tsv,
    write_scores_tsv,
)
from .model import EmbeddingModel
from .train import TrainConfig, train, write_training_log
from .util import derive_seed, sha256_file

NORMALIZATIONS = ("conditional", "ppmi")
RECALL_CONVENTIONS = ("corpus", "holdout")
VARIANTS = ("base", "global", "local")


@dataclass
class PipelineConfig:
    # input files
    corpus: str = ""
    kb: str = ""
    holdout_kb: str = ""
    contexts: str = ""
    base_scores: str = ""
    output_dir: str = "run"
    # graph options
    normalization: str = "conditional"
    ppmi_alpha: float | None = 0.75
    min_row_sum: int = 1
    count_na_pairs: bool = True
    allow_duplicates: bool = True
    na_relation: str = "NA"
    # embedding training
    objective: str = "global"
    embed_size: int = 32
    state_size: int = 32
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 200
    patience: int = 10
    clip_norm: float | None = 5.0
    embeddings_path: str = ""
    train_edges: int = 0  # 0 = use every edge
    val_edges: int = 0
    # merge stage
    merge_k: int = 4
    merge_lr: float = 0.05
    merge_epochs: int = 200
    # evaluation
    eval_n_values: tuple[int, ...] = (10, 50, 100)
    recall_denominator: str = "corpus"
    # run control
    seed: int = 0
    resume: bool = False
    plot: bool = False

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if self.recall_denominator not in RECALL_CONVENTIONS:
            raise ConfigError(f"recall_denominator must be one of {RECALL_CONVENTIONS}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            objective=self.objective,
            embed_size=self.embed_size,
            state_size=self.state_size,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_epsilon=self.adam_epsilon,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=derive_seed(self.seed, f"train-{self.objective}"),
            clip_norm=self.clip_norm,
            embeddings_path=self.embeddings_path or None,
        )

    def out(self, name: str) -> Path:
        return Path(self.output_dir) / name


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_optional_float(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


_PARSERS: dict[str, Callable[[str], object]] = {
    "ppmi_alpha": _parse_optional_float,
    "clip_norm": _parse_optional_float,
    "eval_n_values": _parse_int_list,
    "min_row_sum": int,
    "embed_size": int,
    "state_size": int,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "train_edges": int,
    "val_edges": int,
    "merge_k": int,
    "merge_epochs": int,
    "seed": int,
    "learning_rate": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_epsilon": float,
    "merge_lr": float,
    "count_na_pairs": _parse_bool,
    "allow_duplicates": _parse_bool,
    "resume": _parse_bool,
    "plot": _parse_bool,
}


def _known_keys() -> set[str]:
    return {f.name for f in fields(PipelineConfig)}


def _assign(values: dict, key: str, raw: str) -> None:
    if key not in _known_keys():
        raise ConfigError(f"unknown config key {key!r}")
    parser = _PARSERS.get(key, str)
    try:
        values[key] = parser(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc


def load_config(
    path: str | Path | None = None, overrides: Sequence[str] = ()
) -> PipelineConfig:
    """Read a flat key=value config file and apply CLI overrides on top."""
    values: dict[str, object] = {}
    if path is not None:
        if not Path(path).exists():
            raise InputError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = line.split("=", 1)
                _assign(values, key.strip(), raw.strip())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _assign(values, key.strip(), raw.strip())
    return PipelineConfig(**values)


def config_text(cfg: PipelineConfig) -> str:
    lines = []
    for f in sorted(fields(cfg), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif value is None:
            value = "none"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: PipelineConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode("utf-8")).hexdigest()


def require_inputs(cfg: PipelineConfig, *names: str) -> None:
    """Fail before any artifact is written if a configured input is absent."""
    for name in names:
        value = getattr(cfg, name)
        if not value:
            raise ConfigError(f"config key {name!r} is required for this command")
        if not Path(value).exists():
            raise InputError(f"{name} file not found: {value}")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

GRAPH_FILE = "graph.tsv"


def stage_graph(cfg: PipelineConfig, rebuild: bool = True) -> RelationGraph:
    path = cfg.out(GRAPH_FILE)
    if not rebuild and path.exists():
        return read_graph_tsv(path, na_name=cfg.na_relation)
    require_inputs(cfg, "corpus", "kb")
    path.parent.mkdir(parents=True, exist_ok=True)
    graph = build_graph_from_files(
        cfg.corpus,
        cfg.kb,
        allow_duplicates=cfg.allow_duplicates,
        count_na_pairs=cfg.count_na_pairs,
        na_name=cfg.na_relation,
        min_row_sum=cfg.min_row_sum,
    )
    if cfg.normalization == "conditional":
        graph = normalize_conditional(graph)
    else:
        graph = normalize_ppmi(graph, alpha=cfg.ppmi_alpha)
    write_graph_tsv(graph, path)
    return graph


def _checkpoint_name(cfg) -> str:
    return f"checkpoint_{cfg.objective}.json"


def stage_train(cfg: PipelineConfig, graph: RelationGraph, rebuild: bool = True) -> EmbeddingModel:
    path = cfg.out(_checkpoint_name(cfg))
    if not rebuild and path.exists():
        return EmbeddingModel.load(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    train_edges = val_edges = None
    if cfg.train_edges > 0:
        val_size = cfg.val_edges if cfg.val_edges > 0 else min(cfg.train_edges, graph.num_edges)
        train_edges, val_edges = split_edges(
            graph, cfg.train_edges, val_size, seed=derive_seed(cfg.seed, "edge-split")
        )
    result = train(graph, cfg.train_config(), train_edges, val_edges)
    result.model.save(path)
    write_training_log(result.history, cfg.out(f"train_log_{cfg.objective}.csv"))
    return result.model


def stage_score(
    cfg: PipelineConfig, model: EmbeddingModel, rebuild: bool = True
) -> dict[Candidate, tuple[float, float]]:
    path = cfg.out(f"scores_{cfg.objective}.tsv")
    if not rebuild and path.exists():
        return read_scores_tsv(path)
    require_inputs(cfg, "contexts", "base_scores")
    path.parent.mkdir(parents=True, exist_ok=True)
    base = read_base_scores(cfg.base_scores)
    contexts = read_contexts(cfg.contexts)
    gsums = score_candidates(model, list(base), contexts)
    scored = {cand: (e, gsums[cand]) for cand, e in base.items()}
    write_scores_tsv(scored, path)
    return scored


def stage_merge(
    cfg: PipelineConfig,
    scored: dict[Candidate, tuple[float, float]],
    relation_pool: Sequence[str],
    rebuild: bool = True,
):
    merged_path = cfg.out(f"merged_{cfg.objective}.tsv")
    model_path = cfg.out(f"merge_model_{cfg.objective}.json")
    if not rebuild and merged_path.exists() and model_path.exists():
        with open(model_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        mm = MergeModel(payload["w1"], payload["w2"], payload["cap"])
        return mm, read_merged_tsv(merged_path)
    require_inputs(cfg, "kb")
    merged_path.parent.mkdir(parents=True, exist_ok=True)
    kb_facts = list(read_kb_facts(cfg.kb))
    positives = [
        f
        for f in kb_facts
        if f[1] != cfg.na_relation and Candidate(f[0], f[1], f[2]) in scored
    ]
    if not positives:
        raise DataError("no scored KB facts available as merge positives")
    negatives = negative_sample(
        positives,
        relation_pool,
        cfg.merge_k,
        seed=derive_seed(cfg.seed, "negatives"),
        exclude_facts=set(kb_facts),
    )
    examples = build_merge_examples(scored, positives, negatives)
    mm = train_merge(
        examples,
        lr=cfg.merge_lr,
        epochs=cfg.merge_epochs,
        seed=derive_seed(cfg.seed, "merge"),
    )
    rows = rank_candidates(scored, mm, na_name=cfg.na_relation)
    write_merged_tsv(rows, merged_path)
    with open(model_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"w1": mm.w1, "w2": mm.w2, "cap": mm.cap}, fh, sort_keys=True)
        fh.write("\n")
    return mm, rows


def _recall_denominator(cfg: PipelineConfig, holdout: list) -> int:
    if cfg.recall_denominator == "holdout":
        return max(1, len(set(holdout)))
    contexts = read_contexts(cfg.contexts)
    return max(1, evaluate.reachable_positives(holdout, contexts.keys()))


def stage_eval(cfg: PipelineConfig, rows) -> dict:
    curve_path = cfg.out(f"pr_curve_{cfg.objective}.csv")
    patn_path = cfg.out(f"precision_at_n_{cfg.objective}.csv")
    require_inputs(cfg, "holdout_kb", "contexts", "kb")
    curve_path.parent.mkdir(parents=True, exist_ok=True)
    holdout = list(read_kb_facts(cfg.holdout_kb))
    known = list(read_kb_facts(cfg.kb))
    ranked = evaluate.label_against_kb(
        [(cand, blended) for cand, _, _, blended in rows],
        holdout,
        na_name=cfg.na_relation,
        exclude_facts=known,
    )
    denominator = _recall_denominator(cfg, holdout)
    points = evaluate.pr_curve(ranked, denominator)
    evaluate.write_pr_curve_csv(
        points, curve_path, denominator=denominator, convention=cfg.recall_denominator
    )
    ns = [n for n in cfg.eval_n_values if 1 <= n <= len(ranked)]
    patn = evaluate.precision_at_n(ranked, ns) if ns else {}
    evaluate.write_precision_at_n_csv(patn, patn_path)
    if cfg.plot:
        evaluate.plot_pr_curves({cfg.objective: points}, cfg.out(f"pr_curve_{cfg.objective}.svg"))
    return {"curve": points, "precision_at_n": patn, "denominator": denominator}


# ---------------------------------------------------------------------------
# Full runs and the manifest
# ---------------------------------------------------------------------------

def run_pipeline(cfg: PipelineConfig) -> dict[str, Path]:
    """Execute all stages in order and write the run manifest.

    All inputs are validated up front so a missing file cannot leave a
    partial run behind.  With ``resume = true`` stages whose artifacts
    already exist consume them unchanged.
    """
    require_inputs(cfg, "corpus", "kb", "contexts", "base_scores", "holdout_kb")
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    rebuild = not cfg.resume

    graph = stage_graph(cfg, rebuild=rebuild)
    model = stage_train(cfg, graph, rebuild=rebuild)
    scored = stage_score(cfg, model, rebuild=rebuild)
    _, rows = stage_merge(cfg, scored, model.kb_names, rebuild=rebuild)
    stage_eval(cfg, rows)

    artifacts = {
        "graph": cfg.out(GRAPH_FILE),
        "checkpoint": cfg.out(_checkpoint_name(cfg)),
        "scores": cfg.out(f"scores_{cfg.objective}.tsv"),
        "merge_model": cfg.out(f"merge_model_{cfg.objective}.json"),
        "merged": cfg.out(f"merged_{cfg.objective}.tsv"),
        "pr_curve": cfg.out(f"pr_curve_{cfg.objective}.csv"),
        "precision_at_n": cfg.out(f"precision_at_n_{cfg.objective}.csv"),
    }
    stages = {
        "graph": "graph",
        "checkpoint": "train",
        "scores": "score",
        "merge_model": "merge",
        "merged": "merge",
        "pr_curve": "eval",
        "precision_at_n": "eval",
    }
    manifest = cfg.out(f"manifest_{cfg.objective}.tsv")
    write_manifest(cfg, artifacts, stages, manifest)
    artifacts["manifest"] = manifest
    return artifacts


def write_manifest(
    cfg: PipelineConfig,
    artifacts: dict[str, Path],
    stages: dict[str, str],
    path: Path,
) -> None:
    """TSV of (artifact name, relative path, checksum, producing stage).

    The training log is deliberately absent: it records wall-clock times,
    which are not reproducible.  Everything listed here must be
    byte-identical across reruns with the same config and seed.
    """
    out_dir = Path(cfg.output_dir)
    lines = [
        ("config_sha256", "-", config_hash(cfg), "meta"),
        ("seed", "-", str(cfg.seed), "meta"),
    ]
    for name in sorted(artifacts):
        p = artifacts[name]
        lines.append((name, str(p.relative_to(out_dir)), sha256_file(p), stages[name]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in lines:
            fh.write("\t".join(row) + "\n")


# ---------------------------------------------------------------------------
# Side-by-side report
# ---------------------------------------------------------------------------

def emit_report(cfg: PipelineConfig) -> dict[str, Path]:
    """Compare the external model's ranking against each merged variant.

    The base variant always comes from the configured score file; merged
    variants are picked up from ``merged_global.tsv`` / ``merged_local.tsv``
    when present, otherwise noted as missing.  Report CSV columns are
    fixed: (variant, k, recall, precision) and (variant, n, precision).
    """
    require_inputs(cfg, "base_scores", "holdout_kb", "contexts", "kb")
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    holdout = list(read_kb_facts(cfg.holdout_kb))
    known = list(read_kb_facts(cfg.kb))
    denominator = _recall_denominator(cfg, holdout)

    rankings: dict[str, list] = {}
    notices: list[str] = []
    base = read_base_scores(cfg.base_scores)
    rankings["base"] = evaluate.label_against_kb(
        list(base.items()), holdout, na_name=cfg.na_relation, exclude_facts=known
    )
    for variant in ("global", "local"):
        path = cfg.out(f"merged_{variant}.tsv")
        if path.exists():
            rows = read_merged_tsv(path)
            rankings[variant] = evaluate.label_against_kb(
                [(cand, blended) for cand, _, _, blended in rows],
                holdout,
                na_name=cfg.na_relation,
                exclude_facts=known,
            )
        else:
            notices.append(f"variant {variant}: no merged scores at {path.name}; omitted")

    curves = {name: evaluate.pr_curve(ranked, denominator) for name, ranked in rankings.items()}
    patn = {}
    for name, ranked in rankings.items():
        ns = [n for n in cfg.eval_n_values if 1 <= n <= len(ranked)]
        patn[name] = evaluate.precision_at_n(ranked, ns) if ns else {}

    pr_path = cfg.out("report_pr.csv")
    with open(pr_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("variant,k,recall,precision\n")
        for name in sorted(curves):
            for k, (recall, precision) in enumerate(curves[name], 1):
                fh.write(f"{name},{k},{recall!r},{precision!r}\n")

    patn_path = cfg.out("report_patn.csv")
    with open(patn_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("variant,n,precision\n")
        for name in sorted(patn):
            for n in sorted(patn[name]):
                fh.write(f"{name},{n},{patn[name][n]!r}\n")

    text_path = cfg.out("report.txt")
    with open(text_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"ranking variants: {', '.join(sorted(rankings))}\n")
        fh.write(f"recall denominator: {denominator} ({cfg.recall_denominator})\n")
        for notice in notices:
            fh.write(f"notice: {notice}\n")
        for name in sorted(patn):
            summary = "  ".join(f"P@{n}={patn[name][n]:.3f}" for n in sorted(patn[name]))
            fh.write(f"{name}: {summary or 'no P@N values in range'}\n")

    outputs = {"pr": pr_path, "patn": patn_path, "text": text_path}
    if cfg.plot:
        svg = cfg.out("report_pr.svg")
        evaluate.plot_pr_curves(curves, svg)
        outputs["svg"] = svg
    return outputs
