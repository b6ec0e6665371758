import pytest

from relembed import pipeline
from relembed.cli import main as cli_main
from relembed.errors import ConfigError, InputError
from relembed.pipeline import PipelineConfig, config_hash, load_config, run_pipeline
from relembed.synth import SyntheticSpec, generate_eval_bundle, peaked_mapping


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("data")
    spec = SyntheticSpec(
        num_kb_relations=4,
        num_textual_relations=12,
        true_mapping=peaked_mapping(12, 4, seed=3),
        noise_rate=0.2,
        num_entity_pairs=120,
        num_sentences=1200,
        seed=5,
        skew=0.5,
    )
    return generate_eval_bundle(spec, tmp, holdout_fraction=0.25)


def overrides(bundle, out_dir, extra=()):
    base = [
        f"corpus={bundle['corpus']}",
        f"kb={bundle['kb']}",
        f"holdout_kb={bundle['holdout_kb']}",
        f"contexts={bundle['contexts']}",
        f"base_scores={bundle['base_scores']}",
        f"output_dir={out_dir}",
        "max_epochs=5",
        "patience=5",
        "embed_size=12",
        "state_size=12",
        "merge_epochs=40",
        "seed=1",
    ]
    return base + list(extra)


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def test_config_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        "# a comment\n"
        "seed = 7\n"
        "objective = local\n"
        "eval_n_values = 5,25\n"
        "clip_norm = none\n"
        "count_na_pairs = false\n"
    )
    cfg = load_config(cfg_file, ["seed=9", "plot=true"])
    assert cfg.seed == 9  # override wins
    assert cfg.objective == "local"
    assert cfg.eval_n_values == (5, 25)
    assert cfg.clip_norm is None
    assert cfg.count_na_pairs is False
    assert cfg.plot is True


def test_config_rejects_unknown_keys(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("no_such_key = 1\n")
    with pytest.raises(ConfigError):
        load_config(cfg_file)
    with pytest.raises(ConfigError):
        load_config(None, ["alsonot=2"])
    with pytest.raises(ConfigError):
        load_config(None, ["normalization=bogus"])


def test_config_hash_tracks_values():
    a = PipelineConfig(seed=1)
    b = PipelineConfig(seed=2)
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) == config_hash(PipelineConfig(seed=1))


# ---------------------------------------------------------------------------
# Stage behavior
# ---------------------------------------------------------------------------

def test_missing_kb_fails_before_artifacts(bundle, tmp_path):
    out = tmp_path / "run"
    cfg = load_config(None, overrides(bundle, out, [f"kb={tmp_path}/does_not_exist.tsv"]))
    with pytest.raises(InputError):
        run_pipeline(cfg)
    assert not out.exists() or not any(out.iterdir())


def test_resume_consumes_existing_graph_unchanged(bundle, tmp_path):
    out = tmp_path / "run"
    cfg = load_config(None, overrides(bundle, out, ["max_epochs=2", "patience=2"]))
    graph = pipeline.stage_graph(cfg, rebuild=True)
    graph_bytes = (out / "graph.tsv").read_bytes()
    cfg2 = load_config(None, overrides(bundle, out, ["max_epochs=2", "patience=2", "resume=true"]))
    run_pipeline(cfg2)
    assert (out / "graph.tsv").read_bytes() == graph_bytes
    loaded = pipeline.stage_graph(cfg2, rebuild=False)
    assert loaded.num_edges == graph.num_edges


def test_rerun_is_byte_identical(bundle, tmp_path):
    # identical config (same output dir): every artifact byte-stable
    out = tmp_path / "rerun"
    cfg = load_config(None, overrides(bundle, out))
    a = run_pipeline(cfg)
    snapshot = {name: path.read_bytes() for name, path in a.items()}
    b = run_pipeline(load_config(None, overrides(bundle, out)))
    for name, path in b.items():
        assert path.read_bytes() == snapshot[name], name

    # different output dirs: data artifacts still identical (manifest
    # differs only through the configured paths it hashes)
    out2 = tmp_path / "elsewhere"
    c = run_pipeline(load_config(None, overrides(bundle, out2)))
    for name in c:
        if name != "manifest":
            assert c[name].read_bytes() == snapshot[name], name


def test_manifest_checksums_match_files(bundle, tmp_path):
    from relembed.util import sha256_file

    out = tmp_path / "run"
    artifacts = run_pipeline(load_config(None, overrides(bundle, out)))
    manifest = artifacts["manifest"].read_text().splitlines()
    rows = [line.split("\t") for line in manifest]
    assert rows[0][0] == "config_sha256" and rows[1][0] == "seed"
    for name, rel, checksum, stage in rows[2:]:
        assert sha256_file(out / rel) == checksum
    names = {r[0] for r in rows[2:]}
    assert "graph" in names and "merged" in names
    assert not any("train_log" in r[1] for r in rows[2:])  # wall-clock file excluded


def test_local_objective_pipeline(bundle, tmp_path):
    out = tmp_path / "run"
    artifacts = run_pipeline(load_config(None, overrides(bundle, out, ["objective=local"])))
    assert artifacts["merged"].name == "merged_local.tsv"
    assert artifacts["checkpoint"].name == "checkpoint_local.json"


def test_report_lists_variants_and_notices(bundle, tmp_path):
    out = tmp_path / "run"
    cfg = load_config(None, overrides(bundle, out))
    run_pipeline(cfg)  # produces the global variant only
    outputs = pipeline.emit_report(cfg)
    text = outputs["text"].read_text()
    assert "base" in text and "global" in text
    assert "notice: variant local" in text
    pr_lines = outputs["pr"].read_text().splitlines()
    assert pr_lines[0] == "variant,k,recall,precision"
    variants = {line.split(",")[0] for line in pr_lines[1:]}
    assert variants == {"base", "global"}
    patn_lines = outputs["patn"].read_text().splitlines()
    assert patn_lines[0] == "variant,n,precision"


def test_report_includes_all_three_variants(bundle, tmp_path):
    out = tmp_path / "run"
    run_pipeline(load_config(None, overrides(bundle, out)))
    run_pipeline(load_config(None, overrides(bundle, out, ["objective=local"])))
    cfg = load_config(None, overrides(bundle, out))
    outputs = pipeline.emit_report(cfg)
    text = outputs["text"].read_text()
    assert "notice" not in text
    variants = {
        line.split(",")[0] for line in outputs["pr"].read_text().splitlines()[1:]
    }
    assert variants == {"base", "global", "local"}


def test_edge_split_sizes_respected(bundle, tmp_path):
    out = tmp_path / "run"
    cfg = load_config(None, overrides(bundle, out, ["train_edges=20", "val_edges=8"]))
    graph = pipeline.stage_graph(cfg, rebuild=True)
    assert graph.num_edges >= 20
    model = pipeline.stage_train(cfg, graph, rebuild=True)
    assert model.num_relations == len(graph.kb)
    # deterministic: same split, same checkpoint bytes
    ckpt = (out / "checkpoint_global.json").read_bytes()
    pipeline.stage_train(cfg, graph, rebuild=True)
    assert (out / "checkpoint_global.json").read_bytes() == ckpt


def test_ppmi_normalization_runs(bundle, tmp_path):
    out = tmp_path / "run"
    cfg = load_config(
        None, overrides(bundle, out, ["normalization=ppmi", "objective=local"])
    )
    artifacts = run_pipeline(cfg)
    assert artifacts["graph"].exists()


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_full_run_and_report(bundle, tmp_path, capsys):
    out = tmp_path / "cli_run"
    args = []
    for item in overrides(bundle, out):
        args += ["--set", item]
    assert cli_main(["run", *args]) == 0
    assert (out / "merged_global.tsv").exists()
    assert cli_main(["report", *args]) == 0
    captured = capsys.readouterr()
    assert "ranking variants" in captured.out


def test_cli_reads_config_file(bundle, tmp_path, capsys):
    out = tmp_path / "from_file"
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("".join(f"{item}\n".replace("=", " = ", 1) for item in overrides(bundle, out)))
    assert cli_main(["build-graph", "--config", str(cfg_file)]) == 0
    assert (out / "graph.tsv").exists()
    capsys.readouterr()


def test_cli_error_line_is_machine_parsable(bundle, tmp_path, capsys):
    out = tmp_path / "cli_err"
    args = []
    for item in overrides(bundle, out, ["kb=/nonexistent/kb.tsv"]):
        args += ["--set", item]
    code = cli_main(["run", *args])
    captured = capsys.readouterr()
    assert code == 1
    assert captured.err.startswith("error:io: ")
    assert len(captured.err.strip().splitlines()) == 1


def test_cli_config_error_category(capsys):
    code = cli_main(["train", "--set", "objective=wat"])
    captured = capsys.readouterr()
    assert code == 1
    assert captured.err.startswith("error:config: ")


def test_cli_synth_bundle(tmp_path, capsys):
    out = tmp_path / "synth"
    code = cli_main(
        [
            "synth",
            "--output-dir",
            str(out),
            "--sentences",
            "200",
            "--entity-pairs",
            "40",
            "--bundle",
            "--seed",
            "3",
        ]
    )
    assert code == 0
    assert (out / "corpus.tsv").exists()
    assert (out / "base_scores.tsv").exists()


def test_cli_stage_commands(bundle, tmp_path, capsys):
    out = tmp_path / "stages"
    args = []
    for item in overrides(bundle, out):
        args += ["--set", item]
    assert cli_main(["build-graph", *args]) == 0
    assert (out / "graph.tsv").exists()
    assert cli_main(["train", *args]) == 0
    assert (out / "checkpoint_global.json").exists()
    assert cli_main(["score", *args]) == 0
    assert cli_main(["merge", *args]) == 0
    assert cli_main(["eval", *args]) == 0
    assert (out / "pr_curve_global.csv").exists()
    out_text = capsys.readouterr().out
    assert "graph:" in out_text
