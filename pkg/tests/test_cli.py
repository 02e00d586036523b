import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from synsem.cli import main

CONFIG = {
    "version": 1,
    "seed": 11,
    "simulate": {
        "n_trs": 120,
        "n_targets": 6,
        "planted": ["syn"],
        "snr": 1.0,
        "n_regions": 3,
        "provider": {"dim": 32, "r_syn": 8, "r_lex": 8, "r_ctx": 8, "sigma": 0.05},
    },
    "synthesis": {"k": 5, "k_prime": 20, "threshold": 0.9},
    "score": {"folds": 6, "lags": 3, "min_test_samples": 10},
    "probe": {"folds": 8},
    "report": {"plots": True, "top_regions": 3},
}


def _write_config(tmp_path, **overrides):
    cfg = {**CONFIG, **overrides}
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    cfg = _write_config(tmp_path)
    out = tmp_path / "run"
    code = main(["all", "--config", str(cfg), "--out-dir", str(out)])
    assert code == 0
    return tmp_path, cfg, out


def test_smoke_artifacts_exist(full_run):
    _, _, out = full_run
    assert (out / "fixture" / "story.sentences.jsonl").exists()
    assert (out / "lexicon.jsonl").exists()
    assert (out / "scores" / "bxl.csv").exists()
    assert (out / "decomposition.csv").exists()
    assert (out / "significance.csv").exists()
    assert (out / "probe.csv").exists()
    assert (out / "report" / "summary.csv").exists()
    assert (out / "report" / "convergence.png").exists()
    assert (out / "report" / "roi_scores.png").exists()
    assert (out / "manifest.json").exists()


def test_csv_headers(full_run):
    _, _, out = full_run
    assert (out / "scores" / "xl.csv").read_text().splitlines()[0] == "feature_set,layer,fold,target,score"
    assert (out / "decomposition.csv").read_text().splitlines()[0] == "component,mode,fold,target,value"
    assert (out / "significance.csv").read_text().splitlines()[0] == "region,component,p_raw,p_adj,reject"


def test_rerun_is_noop(full_run, capsys):
    _, cfg, out = full_run
    before = (out / "scores" / "xl.csv").stat().st_mtime_ns
    code = main(["score", "--config", str(cfg), "--out-dir", str(out)])
    assert code == 0
    assert "skipped" in capsys.readouterr().out
    assert (out / "scores" / "xl.csv").stat().st_mtime_ns == before


def test_deterministic_outputs(full_run, tmp_path):
    _, cfg, out = full_run
    out2 = tmp_path / "run2"
    code = main(["all", "--config", str(cfg), "--out-dir", str(out2)])
    assert code == 0
    for rel in [
        Path("scores/xl.csv"),
        Path("scores/baseline.csv"),
        Path("decomposition.csv"),
        Path("significance.csv"),
        Path("probe.csv"),
        Path("report/summary.csv"),
    ]:
        assert (out / rel).read_bytes() == (out2 / rel).read_bytes(), rel


def test_missing_config_exits_2(tmp_path, capsys):
    code = main(["all", "--config", str(tmp_path / "nope.yaml"), "--out-dir", str(tmp_path / "r")])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "nope.yaml" in err["path"]


def test_missing_story_file_exits_2(tmp_path, capsys):
    cfg = {
        "version": 1,
        "seed": 0,
        "stories": [
            {"sentences": str(tmp_path / "ghost.jsonl"), "meta": str(tmp_path / "ghost.json")}
        ],
    }
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    code = main(["lexicon", "--config", str(path), "--out-dir", str(tmp_path / "r")])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "ghost.jsonl" in err["path"]


def test_stage_out_of_order_reports_missing(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    code = main(["score", "--config", str(cfg), "--out-dir", str(tmp_path / "fresh")])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["stage"] == "score"


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "synsem.cli", "all", "--config", "/nonexistent.yaml"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"]


def test_probe_targets_file(tmp_path):
    import json as _json

    from synsem.cli import RunContext, run_stage
    from synsem.data import load_transcript

    cfg_path = _write_config(tmp_path)
    out = tmp_path / "run"
    code = main(["all", "--config", str(cfg_path), "--out-dir", str(out)])
    assert code == 0
    tr = load_transcript(
        out / "fixture" / "story.sentences.jsonl", out / "fixture" / "story.meta.json"
    )
    rows = []
    for sent in tr.sentences:
        for i, tok in enumerate(sent.tokens):
            if tok.is_content:
                rows.append(
                    {
                        "story": sent.story_id,
                        "sent_index": sent.sentence_index,
                        "token_index": i,
                        "name": "word_length",
                        "value": float(len(tok.text)),
                    }
                )
    targets = tmp_path / "targets.jsonl"
    targets.write_text("\n".join(_json.dumps(r) for r in rows) + "\n")

    cfg = {**CONFIG, "probe": {"folds": 8, "targets": str(targets)}}
    cfg_path2 = tmp_path / "config2.yaml"
    cfg_path2.write_text(yaml.safe_dump(cfg))
    ctx = RunContext(cfg_path2, out_dir=out, force=True)
    run_stage(ctx, "probe")
    text = (out / "probe.csv").read_text()
    assert "word_length" in text
    assert "planted_semantic" in text


def test_real_mode_variant_activations(tmp_path):
    """File-provider mode: averaged sets come from variant-story tensors."""
    import numpy as np

    from synsem.cli import RunContext, run_stage
    from synsem.data import load_transcript
    from synsem.dten import load_tensor, store_tensor
    from synsem.pipeline import stimulus_activations, variant_story_id
    from synsem.sim import SynthProviderSpec, SyntheticProvider

    cfg_path = _write_config(tmp_path)
    out = tmp_path / "run"
    for stage in ("simulate", "lexicon", "synth"):
        assert main([stage, "--config", str(cfg_path), "--out-dir", str(out)]) == 0

    fixture = out / "fixture"
    tr = load_transcript(fixture / "story.sentences.jsonl", fixture / "story.meta.json",
                         fixture / "story.phones.jsonl")
    provider = SyntheticProvider(SynthProviderSpec(seed=CONFIG["seed"], **CONFIG["simulate"]["provider"]))

    acts_dir = tmp_path / "acts"
    acts_dir.mkdir()
    story_acts = {}
    for layer in (0, 1):
        p = acts_dir / f"{tr.story_id}.l{layer}.dten"
        store_tensor(stimulus_activations(provider, tr, layer).matrix.astype(np.float32), p)
        story_acts[layer] = str(p)

    variant_entries = []
    for rank in range(CONFIG["synthesis"]["k"]):
        vid = variant_story_id(tr.story_id, rank)
        vtr = load_transcript(out / "variants" / f"{vid}.sentences.jsonl",
                              out / "variants" / f"{vid}.meta.json")
        acts = {}
        for layer in (0, 1):
            p = acts_dir / f"{vid}.l{layer}.dten"
            store_tensor(stimulus_activations(provider, vtr, layer).matrix.astype(np.float32), p)
            acts[layer] = str(p)
        variant_entries.append(
            {
                "sentences": str(out / "variants" / f"{vid}.sentences.jsonl"),
                "meta": str(out / "variants" / f"{vid}.meta.json"),
                "activations": acts,
            }
        )

    real_cfg = {
        "version": 1,
        "seed": CONFIG["seed"],
        "synthesis": CONFIG["synthesis"],
        "score": CONFIG["score"],
        "stories": [
            {
                "sentences": str(fixture / "story.sentences.jsonl"),
                "meta": str(fixture / "story.meta.json"),
                "phones": str(fixture / "story.phones.jsonl"),
                "signals": str(fixture / "signals.dten"),
                "activations": story_acts,
            }
        ],
        "variant_stories": variant_entries,
    }
    real_cfg_path = tmp_path / "real.yaml"
    real_cfg_path.write_text(yaml.safe_dump(real_cfg))

    ctx = RunContext(real_cfg_path, out_dir=out)
    run_stage(ctx, "embed")
    xl = load_tensor(out / "features" / f"{tr.story_id}.xl.dten")
    bxl = load_tensor(out / "features" / f"{tr.story_id}.bxl.dten")
    assert xl.shape == bxl.shape == (tr.n_words, provider.dim)
    assert not np.allclose(xl, bxl)  # averaging really used the variant files

    # the file route reproduces the in-memory average up to f32 storage
    from synsem.cli import _load_variant_sets
    from synsem.pipeline import averaged_activations

    vsets = _load_variant_sets(ctx, tr)
    expected = averaged_activations(provider, tr, vsets, layer=1).bundle.matrix
    assert np.allclose(bxl, expected, atol=1e-4)


def test_real_mode_without_variant_activations_errors(tmp_path):
    from synsem.cli import RunContext, StageError, run_stage

    cfg_path = _write_config(tmp_path)
    out = tmp_path / "run"
    for stage in ("simulate", "lexicon", "synth"):
        assert main([stage, "--config", str(cfg_path), "--out-dir", str(out)]) == 0
    fixture = out / "fixture"
    real_cfg = {
        "version": 1,
        "seed": CONFIG["seed"],
        "synthesis": CONFIG["synthesis"],
        "stories": [
            {
                "sentences": str(fixture / "story.sentences.jsonl"),
                "meta": str(fixture / "story.meta.json"),
                "signals": str(fixture / "signals.dten"),
                "activations": {},
            }
        ],
    }
    real_cfg_path = tmp_path / "real.yaml"
    real_cfg_path.write_text(yaml.safe_dump(real_cfg))
    ctx = RunContext(real_cfg_path, out_dir=out)
    import pytest as _pytest

    with _pytest.raises(StageError, match="variant_stories"):
        run_stage(ctx, "embed")
