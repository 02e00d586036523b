"""End-to-end assembly: synthesis, activation extraction, design building
and cross-validated scoring over one or more stories."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .align import DEFAULT_LAGS, concat_stories, design_matrix
from .data import FeatureBundle
from .encode import RidgeConfig, brain_scores
from .syntax import (
    DEFAULT_K,
    DEFAULT_K_PRIME,
    DEFAULT_SIMILARITY_THRESHOLD,
    select_variants,
    synthesize_variants,
    syntactic_embedding,
    variant_seed,
)


def variant_story_id(story_id, rank):
    """Story id housing every sentence's rank-th selected variant."""
    return f"{story_id}.v{rank}"


def build_variant_sets(
    transcript,
    lexicon,
    k=DEFAULT_K,
    k_prime=DEFAULT_K_PRIME,
    threshold=DEFAULT_SIMILARITY_THRESHOLD,
    seed=0,
    workers=1,
):
    """Synthesize and select variants for every sentence of a story.

    Each sentence owns a derived seed, so results do not depend on worker
    count or scheduling. Returns a list aligned with the sentences; entries
    flag themselves (``short``) when fewer than k variants survived.

    Selected variants are relabeled into per-rank variant stories
    ("<story>.v<rank>"), so activation lookups for variants can never
    silently resolve to the target's own rows in file-backed providers.
    """

    def one(sent):
        candidates = synthesize_variants(
            sent,
            lexicon,
            k_prime=k_prime,
            seed=variant_seed(seed, sent.story_id, sent.sentence_index),
        )
        vset = select_variants(candidates.sentences, sent, k=k, threshold=threshold)
        return dataclasses.replace(
            vset,
            variants=tuple(
                dataclasses.replace(v, story_id=variant_story_id(sent.story_id, j))
                for j, v in enumerate(vset.variants)
            ),
        )

    if workers == 1:
        return [one(s) for s in transcript.sentences]
    runner = Parallel(n_jobs=workers, prefer="threads")
    return runner(delayed(one)(s) for s in transcript.sentences)


def stimulus_activations(provider, transcript, layer, name=None):
    """Stack per-sentence activations into a word-level feature bundle."""
    rows = [provider.activations(s, layer) for s in transcript.sentences]
    return FeatureBundle(
        name=name or f"activations_l{layer}",
        matrix=np.vstack(rows),
        onsets=transcript.word_onsets(),
        layer=layer,
    )


@dataclass
class AveragedActivations:
    bundle: FeatureBundle
    fallback_sentences: list = field(default_factory=list)


def averaged_activations(provider, transcript, variant_sets, layer, name=None, workers=1):
    """Variant-averaged activations, row-aligned with the stimulus words.

    Sentences whose variant set came back empty fall back to their own
    activations and are reported, so the design keeps one row per word.
    """
    if len(variant_sets) != len(transcript.sentences):
        raise ValueError("one variant set per sentence required")

    def one(sent, vset):
        if vset is None or len(vset) == 0:
            return None
        return syntactic_embedding(provider, vset, layer).matrix

    if workers == 1:
        averaged = [one(s, v) for s, v in zip(transcript.sentences, variant_sets)]
    else:
        runner = Parallel(n_jobs=workers, prefer="threads")
        averaged = runner(
            delayed(one)(s, v) for s, v in zip(transcript.sentences, variant_sets)
        )
    rows = []
    fallbacks = []
    for sent, mat in zip(transcript.sentences, averaged):
        if mat is None:
            fallbacks.append((sent.story_id, sent.sentence_index))
            mat = provider.activations(sent, layer)
        rows.append(mat)
    bundle = FeatureBundle(
        name=name or f"averaged_l{layer}",
        matrix=np.vstack(rows),
        onsets=transcript.word_onsets(),
        layer=layer,
    )
    return AveragedActivations(bundle=bundle, fallback_sentences=fallbacks)


def score_feature_set(
    bundles,
    transcripts,
    signals,
    cfg=None,
    lags=DEFAULT_LAGS,
    pre_binned=False,
    normalize="per_fold",
    feature_set="",
    layer=None,
):
    """Design-build and score one feature set across stories.

    ``bundles``, ``transcripts`` and ``signals`` are parallel per-story
    lists; lag stacking restarts at every story boundary and standardization
    groups rows by story.
    """
    if not (len(bundles) == len(transcripts) == len(signals)):
        raise ValueError("bundles, transcripts and signals must align per story")
    designs = [
        design_matrix(b, tr.tr_times, lags=lags, pre_binned=pre_binned)
        for b, tr in zip(bundles, transcripts)
    ]
    X, story_ids, Y = concat_stories(designs, [s.matrix for s in signals])
    return brain_scores(
        X,
        Y,
        cfg=cfg or RidgeConfig(),
        story_ids=story_ids,
        normalize=normalize,
        feature_set=feature_set,
        layer=layer,
    )


def concat_feature_bundles(bundles, name):
    """Columnwise concatenation of same-length bundles (shared onsets)."""
    first = bundles[0]
    for b in bundles[1:]:
        if b.matrix.shape[0] != first.matrix.shape[0] or not np.array_equal(
            b.onsets, first.onsets
        ):
            raise ValueError("bundles must share rows and onsets to concatenate")
    return FeatureBundle(
        name=name,
        matrix=np.hstack([b.matrix for b in bundles]),
        onsets=first.onsets,
    )
