"""Pipeline orchestration from a declarative YAML config.

Each stage writes versioned artifacts into the run directory and is a no-op
when its outputs already exist (unless --force). All randomness flows from
the single ``seed`` key, so identical config and seed give byte-identical
CSV outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import sim
from .data import (
    AnnotatedToken,
    FeatureBundle,
    Sentence,
    SignalBundle,
    Transcript,
    average_subjects,
    load_parcellation,
    load_transcript,
    save_transcript,
)
from .decompose import decompose_scores, read_decomposition_csv, write_decomposition_csv
from .dten import load_tensor, store_tensor
from .encode import RidgeConfig, read_score_csv, write_score_csv
from .phono import PhoneVocabulary, phonological_features
from .pipeline import (
    averaged_activations,
    build_variant_sets,
    stimulus_activations,
    variant_story_id,
)
from .probe import probe_decode
from .stats import load_relabel_csv, roi_average, significance_table, write_significance_csv
from .syntax import FileProvider, build_lexicon, convergence_curve, load_lexicon, save_lexicon, save_variant_sets

STAGES = (
    "simulate",
    "lexicon",
    "synth",
    "embed",
    "align",
    "score",
    "decompose",
    "stats",
    "probe",
    "report",
)

FEATURE_SETS = ("baseline", "x0", "xl", "bx0", "bxl")


class StageError(RuntimeError):
    def __init__(self, message, path=None, exit_code=1):
        super().__init__(message)
        self.path = path
        self.exit_code = exit_code


class RunContext:
    def __init__(self, config_path, out_dir=None, seed=None, workers=None, force=False):
        self.config_path = Path(config_path)
        if not self.config_path.exists():
            raise StageError("config file not found", path=str(config_path), exit_code=2)
        with open(self.config_path, encoding="utf-8") as fh:
            self.config = yaml.safe_load(fh) or {}
        if self.config.get("version", 1) != 1:
            raise StageError(f"unsupported config version {self.config.get('version')!r}")
        self.seed = int(seed if seed is not None else self.config.get("seed", 0))
        # environment may override only paths and worker count
        env_workers = os.environ.get("SYNSEM_WORKERS")
        if workers is None and env_workers is not None:
            workers = int(env_workers)
        self.workers = int(workers if workers is not None else self.config.get("workers", 1))
        self.force = force
        out = out_dir or os.environ.get("SYNSEM_OUT_DIR") or self.config.get("out_dir", "runs/default")
        self.out_dir = Path(out)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._transcripts = None
        self._signals = None

    # -- bookkeeping --

    def path(self, *parts):
        p = self.out_dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def fresh(self, *paths):
        """True when the stage must run (an output is missing or --force)."""
        return self.force or not all(Path(p).exists() for p in paths)

    def record_stage(self, name, outputs, skipped=False):
        manifest_path = self.out_dir / "manifest.json"
        manifest = {}
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
        manifest.setdefault("config_sha256", hashlib.sha256(self.config_path.read_bytes()).hexdigest())
        manifest["seed"] = self.seed
        manifest.setdefault("stages", {})[name] = {
            "outputs": [str(Path(o).relative_to(self.out_dir)) for o in outputs],
            "skipped": skipped,
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    # -- config accessors --

    def sim_config(self):
        cfg = self.config.get("simulate")
        if not cfg:
            raise StageError("config has no 'simulate' section")
        return cfg

    def synthesis_params(self):
        cfg = self.config.get("synthesis", {})
        return {
            "k": int(cfg.get("k", 10)),
            "k_prime": int(cfg.get("k_prime", 100)),
            "threshold": float(cfg.get("threshold", 0.9)),
        }

    def ridge_config(self):
        cfg = self.config.get("score", {})
        grid = cfg.get("lambda_grid")
        kwargs = {
            "folds": int(cfg.get("folds", 100)),
            "min_test_samples": int(cfg.get("min_test_samples", 10)),
        }
        if grid:
            kwargs["lambda_grid"] = tuple(float(g) for g in grid)
        return RidgeConfig(**kwargs)

    def lags(self):
        return int(self.config.get("score", {}).get("lags", 5))

    def normalize(self):
        return self.config.get("score", {}).get("normalize", "per_fold")

    # -- inputs --

    def is_simulation(self):
        return "simulate" in self.config

    def transcripts(self):
        if self._transcripts is not None:
            return self._transcripts
        if self.is_simulation():
            sents = self.path("fixture", "story.sentences.jsonl")
            meta = self.path("fixture", "story.meta.json")
            phones = self.path("fixture", "story.phones.jsonl")
            if not sents.exists():
                raise StageError("simulate stage has not run", path=str(sents), exit_code=2)
            self._transcripts = [load_transcript(sents, meta, phones)]
        else:
            stories = self.config.get("stories")
            if not stories:
                raise StageError("config lists no stories and no 'simulate' section")
            out = []
            for entry in stories:
                for key in ("sentences", "meta"):
                    if key not in entry:
                        raise StageError(f"story entry missing {key!r}")
                    if not Path(entry[key]).exists():
                        raise StageError("story file not found", path=entry[key], exit_code=2)
                phones = entry.get("phones")
                if phones and not Path(phones).exists():
                    raise StageError("story file not found", path=phones, exit_code=2)
                out.append(load_transcript(entry["sentences"], entry["meta"], phones))
            self._transcripts = out
        return self._transcripts

    def signals(self):
        if self._signals is not None:
            return self._signals
        if self.is_simulation():
            path = self.path("fixture", "signals.dten")
            if not path.exists():
                raise StageError("simulate stage has not run", path=str(path), exit_code=2)
            tr = self.transcripts()[0]
            self._signals = [
                SignalBundle(
                    matrix=load_tensor(path).astype(np.float64),
                    tr_times=np.asarray(tr.tr_times),
                    subject_ids=("sim",),
                    story_id=tr.story_id,
                )
            ]
        else:
            out = []
            for entry, tr in zip(self.config["stories"], self.transcripts()):
                paths = entry.get("signals")
                if paths is None:
                    raise StageError(f"story {tr.story_id!r} lists no signals")
                if isinstance(paths, (str, Path)):
                    paths = [paths]
                bundles = []
                for i, p in enumerate(paths):
                    if not Path(p).exists():
                        raise StageError("signals file not found", path=str(p), exit_code=2)
                    bundles.append(
                        SignalBundle(
                            matrix=load_tensor(p).astype(np.float64),
                            tr_times=np.asarray(tr.tr_times),
                            subject_ids=(f"{tr.story_id}-{i}",),
                            story_id=tr.story_id,
                        )
                    )
                out.append(average_subjects(bundles))
            self._signals = out
        return self._signals

    def variant_story_entries(self):
        """Auxiliary config entries carrying activations for variant stories."""
        return self.config.get("variant_stories", [])

    def provider(self, include_variants=False):
        if self.is_simulation():
            spec_kwargs = self.sim_config().get("provider", {})
            spec = sim.SynthProviderSpec(seed=self.seed, **spec_kwargs)
            return sim.SyntheticProvider(spec)
        transcripts = list(self.transcripts())
        entries = list(zip(self.config["stories"], transcripts))
        if include_variants:
            if not self.variant_story_entries():
                raise StageError(
                    "averaged feature sets need activations for the variant stories "
                    "written by the synth stage; list them under 'variant_stories' "
                    "(sentences/meta/activations per '<story>.v<rank>')"
                )
            for entry in self.variant_story_entries():
                for key in ("sentences", "meta"):
                    if key not in entry or not Path(entry[key]).exists():
                        raise StageError(
                            "variant story file not found", path=str(entry.get(key)), exit_code=2
                        )
                tr = load_transcript(entry["sentences"], entry["meta"])
                transcripts.append(tr)
                entries.append((entry, tr))
        paths = {}
        for entry, tr in entries:
            acts = entry.get("activations")
            if not acts:
                raise StageError(f"story {tr.story_id!r} lists no activations")
            by_layer = {}
            for layer, p in acts.items():
                if not Path(p).exists():
                    raise StageError("activations file not found", path=str(p), exit_code=2)
                by_layer[int(layer)] = p
            paths[tr.story_id] = by_layer
        return FileProvider.from_dten(transcripts, paths)

    def layer_pair(self, provider=None):
        layers = self.config.get("score", {}).get("layers", {})
        lexical = int(layers.get("lexical", 0))
        if "deep" in layers:
            deep = int(layers["deep"])
        elif provider is not None:
            deep = provider.n_layers - 1
        else:
            deep = 1
        return lexical, deep


# ---------------------------------------------------------------------------
# stages


def stage_simulate(ctx):
    cfg = ctx.sim_config()
    outputs = [
        ctx.path("fixture", "story.sentences.jsonl"),
        ctx.path("fixture", "story.meta.json"),
        ctx.path("fixture", "story.phones.jsonl"),
        ctx.path("fixture", "signals.dten"),
        ctx.path("fixture", "truth.json"),
        ctx.path("fixture", "parcellation.csv"),
    ]
    if not ctx.fresh(*outputs):
        return outputs, True
    transcript = sim.gen_transcript(
        ctx.seed,
        n_trs=int(cfg.get("n_trs", 600)),
        tr_s=float(cfg.get("tr_s", 1.5)),
        words_per_s=float(cfg.get("words_per_s", 3.0)),
        story_id=str(cfg.get("story_id", "sim")),
    )
    provider = ctx.provider()
    bundle, record = sim.gen_signals(
        provider,
        transcript,
        planted=tuple(cfg.get("planted", ["syn"])),
        snr=float(cfg.get("snr", 1.0)),
        seed=ctx.seed,
        lags=ctx.lags(),
        n_targets=int(cfg.get("n_targets", 20)),
    )
    save_transcript(transcript, outputs[0], outputs[1], outputs[2])
    store_tensor(bundle.matrix.astype(np.float32), outputs[3])
    record.to_json(outputs[4])
    n_regions = int(cfg.get("n_regions", 5))
    with open(outputs[5], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target_index", "region_label"])
        for t in range(bundle.n_targets):
            writer.writerow([t, f"region{t % n_regions:02d}"])
    return outputs, False


def stage_lexicon(ctx):
    out = ctx.path("lexicon.jsonl")
    if not ctx.fresh(out):
        return [out], True
    sentences = [s for tr in ctx.transcripts() for s in tr.sentences]
    save_lexicon(build_lexicon(sentences), out)
    return [out], False


def stage_synth(ctx):
    """Variant synthesis. Besides the audit file, each variant rank is also
    written out as a transcript of its own ("<story>.v<rank>"), ready for an
    external activation model; file-based runs feed those activations back
    through ``variant_stories`` in the config."""
    params = ctx.synthesis_params()
    outputs = []
    for tr in ctx.transcripts():
        outputs.append(ctx.path("variants", f"{tr.story_id}.jsonl"))
        for rank in range(params["k"]):
            vid = variant_story_id(tr.story_id, rank)
            outputs.append(ctx.path("variants", f"{vid}.sentences.jsonl"))
            outputs.append(ctx.path("variants", f"{vid}.meta.json"))
    if not ctx.fresh(*outputs):
        return outputs, True
    lex_path = ctx.path("lexicon.jsonl")
    if not lex_path.exists():
        raise StageError("lexicon stage has not run", path=str(lex_path), exit_code=2)
    lexicon = load_lexicon(lex_path)
    for tr in ctx.transcripts():
        vsets = build_variant_sets(
            tr,
            lexicon,
            k=params["k"],
            k_prime=params["k_prime"],
            threshold=params["threshold"],
            seed=ctx.seed,
            workers=ctx.workers,
        )
        save_variant_sets(vsets, ctx.path("variants", f"{tr.story_id}.jsonl"))
        for rank in range(params["k"]):
            vid = variant_story_id(tr.story_id, rank)
            # short sets pad with the target so every story keeps one
            # sentence per stimulus sentence (padding rows are never read)
            sentences = tuple(
                Sentence(
                    story_id=vid,
                    sentence_index=sent.sentence_index,
                    tokens=(vset.variants[rank] if rank < len(vset) else sent).tokens,
                )
                for sent, vset in zip(tr.sentences, vsets)
            )
            variant_tr = Transcript(
                story_id=vid, sentences=sentences, phones=(), tr_times=tr.tr_times
            )
            save_transcript(
                variant_tr,
                ctx.path("variants", f"{vid}.sentences.jsonl"),
                ctx.path("variants", f"{vid}.meta.json"),
            )
    return outputs, False


def _load_variant_sets(ctx, transcript):
    """Rebuild variant sentences from the synthesis audit file."""
    from .syntax import VariantSet

    path = ctx.path("variants", f"{transcript.story_id}.jsonl")
    if not path.exists():
        raise StageError("synth stage has not run", path=str(path), exit_code=2)
    by_index = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                by_index[obj["sent_index"]] = obj
    vsets = []
    for sent in transcript.sentences:
        obj = by_index.get(sent.sentence_index)
        if obj is None:
            raise StageError(f"variants missing for sentence {sent.sentence_index}", path=str(path))
        variants = []
        for rank, entry in enumerate(obj["variants"]):
            tokens = tuple(
                AnnotatedToken(
                    text=text,
                    pos=t.pos,
                    dep=t.dep,
                    head=t.head,
                    onset_s=t.onset_s,
                    offset_s=t.offset_s,
                    is_content=t.is_content,
                )
                for text, t in zip(entry["texts"], sent.tokens)
            )
            variants.append(
                Sentence(
                    story_id=variant_story_id(sent.story_id, rank),
                    sentence_index=sent.sentence_index,
                    tokens=tokens,
                )
            )
        vsets.append(
            VariantSet(
                target=sent,
                variants=tuple(variants),
                similarities=tuple(e["similarity"] for e in obj["variants"]),
                requested_k=obj["requested_k"],
            )
        )
    return vsets


def stage_embed(ctx):
    transcripts = ctx.transcripts()
    outputs = []
    for tr in transcripts:
        for name in FEATURE_SETS:
            outputs.append(ctx.path("features", f"{tr.story_id}.{name}.dten"))
    outputs.append(ctx.path("features", "meta.json"))
    outputs.append(ctx.path("features", "convergence.csv"))
    if not ctx.fresh(*outputs):
        return outputs, True
    provider = ctx.provider(include_variants=True)
    lexical_layer, deep_layer = ctx.layer_pair(provider)
    vocab = PhoneVocabulary.from_transcripts(transcripts)
    meta = {
        "sets": {},
        "lexical_layer": lexical_layer,
        "deep_layer": deep_layer,
        "fallback_sentences": [],
    }
    curves = []
    for tr in transcripts:
        vsets = _load_variant_sets(ctx, tr)
        baseline = phonological_features(tr, vocab)
        x0 = stimulus_activations(provider, tr, lexical_layer, name="x0")
        xl = stimulus_activations(provider, tr, deep_layer, name="xl")
        bx0 = averaged_activations(provider, tr, vsets, lexical_layer, name="bx0", workers=ctx.workers)
        bxl = averaged_activations(provider, tr, vsets, deep_layer, name="bxl", workers=ctx.workers)
        meta["fallback_sentences"].extend(
            [list(x) for x in bxl.fallback_sentences]
        )
        for name, bundle in [
            ("baseline", baseline),
            ("x0", x0),
            ("xl", xl),
            ("bx0", bx0.bundle),
            ("bxl", bxl.bundle),
        ]:
            store_tensor(
                bundle.matrix.astype(np.float32), ctx.path("features", f"{tr.story_id}.{name}.dten")
            )
            meta["sets"][name] = {"pre_binned": name == "baseline"}
        for vset in vsets[:100]:
            if len(vset) >= 2:
                curves.append(convergence_curve(provider, vset, deep_layer))
    with open(ctx.path("features", "convergence.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "mean_cosine"])
        if curves:
            k_max = max(len(c) for c in curves)
            for i in range(k_max):
                vals = [c[i][1] for c in curves if len(c) > i and np.isfinite(c[i][1])]
                if vals:
                    writer.writerow([i + 2, repr(float(np.mean(vals)))])
    with open(ctx.path("features", "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return outputs, False


def stage_align(ctx):
    from .align import concat_stories, design_matrix

    outputs = [ctx.path("designs", f"{name}.dten") for name in FEATURE_SETS]
    outputs.append(ctx.path("designs", "story_rows.dten"))
    if not ctx.fresh(*outputs):
        return outputs, True
    transcripts = ctx.transcripts()
    meta_path = ctx.path("features", "meta.json")
    if not meta_path.exists():
        raise StageError("embed stage has not run", path=str(meta_path), exit_code=2)
    meta = json.loads(meta_path.read_text())
    story_rows = None
    for name in FEATURE_SETS:
        designs = []
        for tr in transcripts:
            feat_path = ctx.path("features", f"{tr.story_id}.{name}.dten")
            if not feat_path.exists():
                raise StageError("embed stage has not run", path=str(feat_path), exit_code=2)
            matrix = load_tensor(feat_path).astype(np.float64)
            pre_binned = meta["sets"][name]["pre_binned"]
            onsets = (
                np.asarray(tr.tr_times) if pre_binned else tr.word_onsets()
            )
            bundle = FeatureBundle(name=name, matrix=matrix, onsets=onsets)
            designs.append(design_matrix(bundle, tr.tr_times, lags=ctx.lags(), pre_binned=pre_binned))
        X, rows = concat_stories(designs)
        store_tensor(X.astype(np.float32), ctx.path("designs", f"{name}.dten"))
        story_rows = rows
    store_tensor(story_rows.astype(np.float64), ctx.path("designs", "story_rows.dten"))
    return outputs, False


def stage_score(ctx):
    from .encode import brain_scores

    outputs = [ctx.path("scores", f"{name}.csv") for name in FEATURE_SETS]
    if not ctx.fresh(*outputs):
        return outputs, True
    story_rows_path = ctx.path("designs", "story_rows.dten")
    if not story_rows_path.exists():
        raise StageError("align stage has not run", path=str(story_rows_path), exit_code=2)
    story_ids = load_tensor(story_rows_path).astype(np.int64)
    Y = np.vstack([s.matrix for s in ctx.signals()])
    cfg = ctx.ridge_config()
    feat_meta_path = ctx.path("features", "meta.json")
    if feat_meta_path.exists():
        feat_meta = json.loads(feat_meta_path.read_text())
        lexical_layer, deep_layer = feat_meta["lexical_layer"], feat_meta["deep_layer"]
    else:
        lexical_layer, deep_layer = ctx.layer_pair()
    layer_of = {
        "baseline": None,
        "x0": lexical_layer,
        "xl": deep_layer,
        "bx0": lexical_layer,
        "bxl": deep_layer,
    }
    for name in FEATURE_SETS:
        X = load_tensor(ctx.path("designs", f"{name}.dten")).astype(np.float64)
        table = brain_scores(
            X,
            Y,
            cfg,
            story_ids=story_ids,
            normalize=ctx.normalize(),
            feature_set=name,
            layer=layer_of[name],
        )
        write_score_csv(table, ctx.path("scores", f"{name}.csv"))
    return outputs, False


def stage_decompose(ctx):
    out = ctx.path("decomposition.csv")
    if not ctx.fresh(out):
        return [out], True
    tables = {}
    for name in FEATURE_SETS:
        path = ctx.path("scores", f"{name}.csv")
        if not path.exists():
            raise StageError("score stage has not run", path=str(path), exit_code=2)
        tables[name] = read_score_csv(path)
    report = decompose_scores(
        phono=tables["baseline"],
        lexical_full=tables["x0"],
        deep_full=tables["xl"],
        lexical_syntax=tables["bx0"],
        deep_syntax=tables["bxl"],
    )
    write_decomposition_csv(report, out)
    return [out], False


def _parcellation_path(ctx):
    configured = ctx.config.get("stats", {}).get("parcellation")
    if configured:
        if not Path(configured).exists():
            raise StageError("parcellation file not found", path=str(configured), exit_code=2)
        return Path(configured)
    fixture = ctx.path("fixture", "parcellation.csv")
    if fixture.exists():
        return fixture
    raise StageError("no parcellation table configured")


def stage_stats(ctx):
    out = ctx.path("significance.csv")
    if not ctx.fresh(out):
        return [out], True
    decomp_path = ctx.path("decomposition.csv")
    if not decomp_path.exists():
        raise StageError("decompose stage has not run", path=str(decomp_path), exit_code=2)
    components = read_decomposition_csv(decomp_path)
    parc = load_parcellation(_parcellation_path(ctx))
    q = float(ctx.config.get("stats", {}).get("q", 0.05))
    roi_by_component = {}
    labels = None
    for name, values in sorted(components.items()):
        roi_scores, labels = roi_average(values, parc)
        roi_by_component[name] = roi_scores
    rows = significance_table(roi_by_component, labels, q=q)
    relabel = ctx.config.get("stats", {}).get("relabel")
    if relabel:
        mapping = load_relabel_csv(relabel)
        rows = [(mapping.get(r, r), c, p, pa, rej) for r, c, p, pa, rej in rows]
    write_significance_csv(rows, out)
    return [out], False


def stage_probe(ctx):
    out = ctx.path("probe.csv")
    if not ctx.fresh(out):
        return [out], True
    transcripts = ctx.transcripts()
    provider = ctx.provider()
    _, deep_layer = ctx.layer_pair(provider)
    embeddings = {}
    for name in ("xl", "bxl"):
        mats = []
        for tr in transcripts:
            path = ctx.path("features", f"{tr.story_id}.{name}.dten")
            if not path.exists():
                raise StageError("embed stage has not run", path=str(path), exit_code=2)
            mats.append(load_tensor(path).astype(np.float64))
        embeddings[name] = np.vstack(mats)
    sentences = [s for tr in transcripts for s in tr.sentences]
    from .probe import align_probe_targets, content_mask, load_probe_targets, pos_labels, tree_depths

    content = content_mask(sentences)
    # feature name -> (kind, values, row mask or None)
    features = {}
    if ctx.is_simulation():
        # word-meaning features follow the content-word restriction
        features["planted_semantic"] = (
            "continuous",
            sim.planted_semantic_feature(provider, sentences, seed=ctx.seed),
            content,
        )
        features["planted_syntactic"] = (
            "continuous",
            sim.planted_syntactic_feature(provider, sentences, seed=ctx.seed),
            None,
        )
    features["pos"] = ("categorical", np.array(pos_labels(sentences)), None)
    features["tree_depth"] = ("continuous", tree_depths(sentences), None)
    targets_path = ctx.config.get("probe", {}).get("targets")
    if targets_path:
        if not Path(targets_path).exists():
            raise StageError("probe targets file not found", path=str(targets_path), exit_code=2)
        for name, table in sorted(load_probe_targets(targets_path).items()):
            values, available = align_probe_targets(sentences, table)
            sample = next(v for v, ok in zip(values, available) if ok)
            if isinstance(sample, str):
                kind = "categorical"
                vals = np.array([v if v is not None else "" for v in values])
            else:
                kind = "continuous"
                vals = np.array(
                    [np.atleast_1d(v) if v is not None else np.zeros_like(np.atleast_1d(sample)) for v in values]
                )
            features[name] = (kind, vals, available & content)
    folds = int(ctx.config.get("probe", {}).get("folds", 10))
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "embedding", "kind", "mean", "sem"])
        for fname, (kind, values, mask) in features.items():
            for ename, emb in embeddings.items():
                res = probe_decode(emb, values, kind=kind, folds=folds, mask=mask)
                writer.writerow([fname, ename, kind, repr(res.mean), repr(res.sem)])
    return [out], False


def stage_report(ctx):
    outputs = [ctx.path("report", "summary.csv")]
    plots = bool(ctx.config.get("report", {}).get("plots", True))
    if plots:
        outputs += [ctx.path("report", "convergence.png"), ctx.path("report", "roi_scores.png")]
    if not ctx.fresh(*outputs):
        return outputs, True
    score_rows = []
    for name in FEATURE_SETS:
        path = ctx.path("scores", f"{name}.csv")
        if not path.exists():
            raise StageError("score stage has not run", path=str(path), exit_code=2)
        table = read_score_csv(path)
        score_rows.append((name, float(table.scores.mean()), float(table.scores.std())))
    with open(outputs[0], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_set", "mean_score", "std_score"])
        for name, mean, std in score_rows:
            writer.writerow([name, repr(mean), repr(std)])
    if plots:
        _plot_convergence(ctx, outputs[1])
        _plot_roi_bars(ctx, outputs[2])
    return outputs, False


def _plot_convergence(ctx, out_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = ctx.path("features", "convergence.csv")
    if not path.exists():
        raise StageError("embed stage has not run", path=str(path), exit_code=2)
    ks, cosines = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ks.append(int(row["k"]))
            cosines.append(float(row["mean_cosine"]))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, cosines, marker="o")
    ax.set_xlabel("variants averaged (K)")
    ax.set_ylabel("cosine to previous running mean")
    ax.set_ylim(min(cosines + [0.8]), 1.001)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _plot_roi_bars(ctx, out_path, top_n=None):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sig_path = ctx.path("significance.csv")
    decomp_path = ctx.path("decomposition.csv")
    if not sig_path.exists() or not decomp_path.exists():
        raise StageError("stats stage has not run", path=str(sig_path), exit_code=2)
    components = read_decomposition_csv(decomp_path)
    parc = load_parcellation(_parcellation_path(ctx))
    rejects = {}
    with open(sig_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rejects[(row["region"], row["component"])] = row["reject"] == "1"
    top_n = top_n or int(ctx.config.get("report", {}).get("top_regions", 10))
    chosen = [c for c in ("lexical_gain", "compositional_strict", "syntactic_gain", "semantic") if c in components]
    fig, axes = plt.subplots(1, len(chosen), figsize=(3.2 * len(chosen), 3.2), squeeze=False)
    for ax, name in zip(axes[0], chosen):
        roi_scores, labels = roi_average(components[name], parc)
        means = roi_scores.mean(axis=0)
        sems = roi_scores.std(axis=0, ddof=1) / np.sqrt(roi_scores.shape[0])
        order = np.argsort(means)[::-1][:top_n]
        ax.bar(range(len(order)), means[order], yerr=sems[order], color="#777799")
        for xi, oi in enumerate(order):
            if rejects.get((labels[oi], name)):
                ax.text(xi, means[oi] + sems[oi], "*", ha="center")
        ax.set_xticks(range(len(order)))
        ax.set_xticklabels([labels[i] for i in order], rotation=60, ha="right", fontsize=7)
        ax.set_title(name, fontsize=9)
        ax.axhline(0.0, color="black", linewidth=0.6)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


_STAGE_FNS = {
    "simulate": stage_simulate,
    "lexicon": stage_lexicon,
    "synth": stage_synth,
    "embed": stage_embed,
    "align": stage_align,
    "score": stage_score,
    "decompose": stage_decompose,
    "stats": stage_stats,
    "probe": stage_probe,
    "report": stage_report,
}


def run_stage(ctx, name):
    outputs, skipped = _STAGE_FNS[name](ctx)
    ctx.record_stage(name, outputs, skipped=skipped)
    return skipped


def run_pipeline(config_path, stages, out_dir=None, seed=None, workers=None, force=False):
    ctx = RunContext(config_path, out_dir=out_dir, seed=seed, workers=workers, force=force)
    for name in stages:
        if name == "simulate" and not ctx.is_simulation():
            continue
        skipped = run_stage(ctx, name)
        print(f"[{name}] {'skipped (outputs exist)' if skipped else 'done'}")
    return ctx


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="synsem",
        description="Decompose encoding-model scores into linguistic components.",
    )
    parser.add_argument("stage", choices=STAGES + ("all",))
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--force", action="store_true")
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args(argv)
    stages = STAGES if args.stage == "all" else (args.stage,)
    try:
        run_pipeline(
            args.config,
            stages,
            out_dir=args.out_dir,
            seed=args.seed,
            workers=args.workers,
            force=args.force,
        )
    except StageError as exc:
        payload = {"error": str(exc), "stage": args.stage}
        if exc.path:
            payload["path"] = exc.path
        print(json.dumps(payload), file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(json.dumps({"error": str(exc), "stage": args.stage, "path": exc.filename}), file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(json.dumps({"error": str(exc), "stage": args.stage}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
