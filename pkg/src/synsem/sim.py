"""Synthetic ground truth: a template grammar, an embedding provider with
mutually orthogonal structural / lexical / contextual subspaces, and planted
response signals with controlled signal-to-noise ratio.

The provider writes tag-sequence information, lemma identity and lemma-bigram
mixing into orthogonal subspaces of one activation vector, so pipeline
recovery of each planted subspace can be checked exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._seeding import stable_seed
from .align import DEFAULT_LAGS, bin_sum, lag_stack, nearest_tr
from .data import AnnotatedToken, CONTENT_POS, PhoneEvent, Sentence, SignalBundle, Transcript
from .syntax import EmbeddingProvider

COMPONENT_NAMES = ("syn", "lex", "ctx")


# ---------------------------------------------------------------------------
# template grammar


@dataclass(frozen=True)
class Grammar:
    templates: tuple  # each a tuple of (pos, dep, head index or None)
    vocab: dict  # pos -> tuple of lemmas


_TEMPLATES = (
    (("DET", "det", 1), ("NOUN", "nsubj", 2), ("VERB", "root", None)),
    (("NOUN", "nsubj", 1), ("VERB", "root", None), ("ADV", "advmod", 1)),
    (("PRON", "nsubj", 1), ("VERB", "root", None), ("NOUN", "obj", 1)),
    (("DET", "det", 1), ("NOUN", "nsubj", 2), ("VERB", "root", None), ("ADJ", "xcomp", 2)),
    (("PRON", "nsubj", 1), ("VERB", "root", None), ("ADP", "case", 3), ("NOUN", "obl", 1)),
    (("ADV", "advmod", 1), ("VERB", "root", None), ("DET", "det", 3), ("NOUN", "obj", 1)),
    (
        ("DET", "det", 1),
        ("NOUN", "nsubj", 2),
        ("VERB", "root", None),
        ("DET", "det", 4),
        ("NOUN", "obj", 2),
    ),
    (
        ("DET", "det", 2),
        ("ADJ", "amod", 2),
        ("NOUN", "nsubj", 3),
        ("VERB", "root", None),
        ("NOUN", "obj", 3),
    ),
    (
        ("NOUN", "nsubj", 1),
        ("VERB", "root", None),
        ("DET", "det", 3),
        ("NOUN", "obj", 1),
        ("ADV", "advmod", 1),
    ),
    (
        ("PRON", "nsubj", 1),
        ("VERB", "root", None),
        ("NOUN", "obj", 1),
        ("CCONJ", "cc", 4),
        ("NOUN", "conj", 2),
    ),
    (
        ("DET", "det", 2),
        ("ADJ", "amod", 2),
        ("NOUN", "nsubj", 3),
        ("VERB", "root", None),
        ("ADJ", "amod", 5),
        ("NOUN", "obj", 3),
    ),
    (
        ("DET", "det", 1),
        ("NOUN", "nsubj", 3),
        ("ADV", "advmod", 3),
        ("VERB", "root", None),
        ("ADP", "case", 5),
        ("NOUN", "obl", 3),
    ),
    (
        ("PRON", "nsubj", 1),
        ("VERB", "root", None),
        ("ADV", "advmod", 1),
        ("ADP", "case", 4),
        ("NOUN", "obl", 1),
        ("PUNCT", "punct", 1),
    ),
    (
        ("DET", "det", 1),
        ("NOUN", "nsubj", 2),
        ("VERB", "root", None),
        ("DET", "det", 4),
        ("NOUN", "obj", 2),
        ("ADP", "case", 6),
        ("NOUN", "nmod", 4),
    ),
    (
        ("PRON", "nsubj", 1),
        ("VERB", "root", None),
        ("ADV", "advmod", 1),
        ("CCONJ", "cc", 4),
        ("VERB", "conj", 1),
        ("DET", "det", 6),
        ("NOUN", "obj", 4),
    ),
    (
        ("DET", "det", 1),
        ("ADJ", "amod", 2),
        ("NOUN", "nsubj", 3),
        ("VERB", "root", None),
        ("ADP", "case", 5),
        ("DET", "det", 6),
        ("NOUN", "obl", 3),
    ),
    (
        ("NOUN", "nsubj", 2),
        ("ADV", "advmod", 2),
        ("VERB", "root", None),
        ("DET", "det", 4),
        ("NOUN", "obj", 2),
        ("CCONJ", "cc", 6),
        ("NOUN", "conj", 4),
        ("PUNCT", "punct", 2),
    ),
    (
        ("DET", "det", 1),
        ("NOUN", "nsubj", 4),
        ("ADJ", "amod", 1),
        ("ADV", "advmod", 4),
        ("VERB", "root", None),
        ("DET", "det", 6),
        ("NOUN", "obj", 4),
        ("ADV", "advmod", 4),
    ),
    (
        ("PRON", "nsubj", 1),
        ("VERB", "root", None),
        ("DET", "det", 3),
        ("NOUN", "obj", 1),
        ("ADP", "case", 6),
        ("ADJ", "amod", 6),
        ("NOUN", "nmod", 3),
        ("PUNCT", "punct", 1),
    ),
    (
        ("DET", "det", 1),
        ("NOUN", "nsubj", 2),
        ("VERB", "root", None),
        ("NOUN", "obj", 2),
        ("CCONJ", "cc", 5),
        ("VERB", "conj", 2),
        ("DET", "det", 7),
        ("NOUN", "obj", 5),
        ("ADV", "advmod", 5),
    ),
)

_VOCAB_SIZES = {
    "NOUN": 60,
    "VERB": 40,
    "ADJ": 30,
    "ADV": 20,
    "PRON": 8,
    "DET": 6,
    "ADP": 10,
    "CCONJ": 4,
}

_PUNCT = (".", "!", "?")

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _pseudoword(rng, n_syllables):
    return "".join(
        _CONSONANTS[rng.integers(0, len(_CONSONANTS))] + _VOWELS[rng.integers(0, len(_VOWELS))]
        for _ in range(n_syllables)
    )


def default_grammar():
    """Fixed toy grammar: deterministic vocabulary, one tree per template."""
    rng = np.random.default_rng(stable_seed("grammar-vocab", 1))
    vocab = {}
    seen = set()
    for pos, size in _VOCAB_SIZES.items():
        words = []
        while len(words) < size:
            w = _pseudoword(rng, int(rng.integers(2, 4)))
            if w not in seen:
                seen.add(w)
                words.append(w)
        vocab[pos] = tuple(words)
    vocab["PUNCT"] = _PUNCT
    return Grammar(templates=_TEMPLATES, vocab=vocab)


def gen_corpus(seed, n_sentences, grammar=None, story_id="sim", words_per_s=3.0, start_s=0.0):
    """Sample sentences from the template grammar with uniform vocabulary.

    Word onsets advance at a constant rate through the story.
    """
    grammar = grammar or default_grammar()
    rng = np.random.default_rng(seed)
    word_dur = 1.0 / words_per_s
    sentences = []
    cursor = start_s
    for sent_index in range(n_sentences):
        template = grammar.templates[rng.integers(0, len(grammar.templates))]
        tokens = []
        for pos, dep, head in template:
            pool = grammar.vocab[pos]
            text = pool[rng.integers(0, len(pool))]
            tokens.append(
                AnnotatedToken(
                    text=text,
                    pos=pos,
                    dep=dep,
                    head=head,
                    onset_s=round(cursor, 6),
                    offset_s=round(cursor + word_dur, 6),
                    is_content=pos in CONTENT_POS,
                )
            )
            cursor += word_dur
        sentences.append(
            Sentence(story_id=story_id, sentence_index=sent_index, tokens=tuple(tokens))
        )
    return sentences


def _phones_for_word(word, onset, offset):
    """Cheap deterministic pseudo-phones: one per syllable of the pseudoword."""
    n = max(1, len(word) // 2)
    dur = (offset - onset) / n
    phones = []
    for j in range(n):
        label = word[2 * j : 2 * j + 2] if 2 * j + 2 <= len(word) else word[-2:]
        phones.append(
            PhoneEvent(
                label=label or word,
                stress=str(len(word) % 3),
                tone=str(j % 2),
                onset_s=round(onset + j * dur, 6),
                offset_s=round(onset + (j + 1) * dur, 6),
            )
        )
    return phones


def gen_transcript(
    seed,
    n_trs,
    grammar=None,
    story_id="sim",
    tr_s=1.5,
    words_per_s=3.0,
    with_phones=True,
):
    """A full synthetic story sized to ``n_trs`` acquisition samples."""
    grammar = grammar or default_grammar()
    word_budget = int(n_trs * tr_s * words_per_s)
    # draw generously, then truncate to the word budget at a sentence boundary
    max_sentences = word_budget // 3 + 2
    sentences = gen_corpus(seed, max_sentences, grammar, story_id, words_per_s)
    kept = []
    count = 0
    for sent in sentences:
        if count + len(sent) > word_budget and kept:
            break
        kept.append(sent)
        count += len(sent)
    kept = [
        Sentence(story_id=story_id, sentence_index=i, tokens=s.tokens)
        for i, s in enumerate(kept)
    ]
    phones = []
    if with_phones:
        for sent in kept:
            for tok in sent.tokens:
                phones.extend(_phones_for_word(tok.text, tok.onset_s, tok.offset_s))
    tr_times = tuple(round((i + 0.5) * tr_s, 6) for i in range(n_trs))
    return Transcript(story_id=story_id, sentences=tuple(kept), phones=tuple(phones), tr_times=tr_times)


# ---------------------------------------------------------------------------
# synthetic embedding provider


@dataclass(frozen=True)
class SynthProviderSpec:
    dim: int = 64
    r_syn: int = 16
    r_lex: int = 16
    r_ctx: int = 16
    sigma: float = 0.05
    seed: int = 0
    n_layers: int = 2

    def __post_init__(self):
        if self.r_syn + self.r_lex + self.r_ctx > self.dim:
            raise ValueError("subspace ranks exceed the embedding dimension")
        if self.n_layers < 2:
            raise ValueError("need at least a lexical layer and one deep layer")


class SyntheticProvider(EmbeddingProvider):
    """Deterministic activations with separable planted subspaces.

    Layer 0 carries only lemma identity (plus isotropic noise); deeper
    layers add the tag-sequence and lemma-bigram components. Identical tag
    sequences share the structural component exactly.
    """

    def __init__(self, spec):
        self.spec = spec
        self.dim = spec.dim
        self.n_layers = spec.n_layers
        rng = np.random.default_rng(stable_seed("bases", spec.seed))
        total = spec.r_syn + spec.r_lex + spec.r_ctx
        basis, _ = np.linalg.qr(rng.standard_normal((spec.dim, total)))
        self.basis_syn = basis[:, : spec.r_syn]
        self.basis_lex = basis[:, spec.r_syn : spec.r_syn + spec.r_lex]
        self.basis_ctx = basis[:, spec.r_syn + spec.r_lex :]
        self._syn_cache = {}
        self._lex_cache = {}
        self._ctx_cache = {}

    # -- component features (one row per token) --

    def syn_features(self, sentence):
        tags = tuple((t.pos, t.dep) for t in sentence.tokens)
        mat = self._syn_cache.get(tags)
        if mat is None:
            rng = np.random.default_rng(stable_seed("syn", self.spec.seed, tags))
            mat = rng.standard_normal((len(tags), self.spec.r_syn))
            self._syn_cache[tags] = mat
        return mat

    def _lex_row(self, lemma):
        row = self._lex_cache.get(lemma)
        if row is None:
            rng = np.random.default_rng(stable_seed("lex", self.spec.seed, lemma))
            row = rng.standard_normal(self.spec.r_lex)
            self._lex_cache[lemma] = row
        return row

    def lex_features(self, sentence):
        return np.array([self._lex_row(t.text) for t in sentence.tokens])

    def _ctx_row(self, bigram):
        row = self._ctx_cache.get(bigram)
        if row is None:
            rng = np.random.default_rng(stable_seed("ctx", self.spec.seed, bigram))
            row = rng.standard_normal(self.spec.r_ctx)
            self._ctx_cache[bigram] = row
        return row

    def ctx_features(self, sentence):
        prev = "<s>"
        rows = []
        for tok in sentence.tokens:
            rows.append(self._ctx_row((prev, tok.text)))
            prev = tok.text
        return np.array(rows)

    def component_features(self, sentences, component):
        """Stacked per-token features of one planted component."""
        fn = {
            "syn": self.syn_features,
            "lex": self.lex_features,
            "ctx": self.ctx_features,
        }[component]
        return np.vstack([fn(s) for s in sentences])

    # -- provider contract --

    def activations(self, sentence, layer):
        if not 0 <= layer < self.n_layers:
            raise ValueError(f"layer {layer} outside [0, {self.n_layers})")
        out = self.lex_features(sentence) @ self.basis_lex.T
        if layer > 0:
            out = out + self.syn_features(sentence) @ self.basis_syn.T
            out = out + self.ctx_features(sentence) @ self.basis_ctx.T
        if self.spec.sigma > 0:
            rng = np.random.default_rng(
                stable_seed("noise", self.spec.seed, layer, sentence.texts)
            )
            out = out + self.spec.sigma * rng.standard_normal(out.shape)
        return out


def gen_provider(spec=None):
    return SyntheticProvider(spec or SynthProviderSpec())


# ---------------------------------------------------------------------------
# planted response signals


@dataclass(frozen=True)
class GroundTruth:
    """Everything needed to regenerate a planted signal bit-identically."""

    provider_spec: dict
    planted: tuple
    snr: float
    seed: int
    lags: int
    n_targets: int
    story_id: str
    y_sha256: str

    def to_json(self, path):
        payload = asdict(self)
        payload["snr"] = "inf" if math.isinf(self.snr) else self.snr
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        payload["snr"] = float(payload["snr"]) if payload["snr"] != "inf" else math.inf
        payload["planted"] = tuple(payload["planted"])
        return cls(**payload)


def gen_signals(provider, transcript, planted=("syn",), snr=1.0, seed=0, lags=DEFAULT_LAGS, n_targets=50):
    """Drive responses from the chosen planted subspaces through the
    alignment transform, then add noise at an exact variance ratio.

    Returns (SignalBundle, GroundTruth). Regenerating with the same
    arguments reproduces the responses bit for bit.
    """
    bad = [c for c in planted if c not in COMPONENT_NAMES]
    if bad:
        raise ValueError(f"unknown planted components {bad}; choose from {COMPONENT_NAMES}")
    if not planted:
        raise ValueError("at least one planted component required")
    if not (snr > 0):
        raise ValueError("snr must be positive (use math.inf for noiseless)")
    sentences = transcript.sentences
    U = np.hstack([provider.component_features(sentences, c) for c in planted])
    asg = nearest_tr(transcript.word_onsets(), transcript.tr_times)
    design = lag_stack(bin_sum(U, asg), lags=lags).matrix
    w_rng = np.random.default_rng(stable_seed("signal-weights", seed))
    W = w_rng.standard_normal((design.shape[1], n_targets)) / np.sqrt(design.shape[1])
    signal = design @ W
    sig_std = signal.std(axis=0)
    if np.any(sig_std == 0):
        raise ValueError("planted signal has constant targets; check the transcript size")
    if math.isinf(snr):
        Y = signal
    else:
        e_rng = np.random.default_rng(stable_seed("signal-noise", seed))
        noise = e_rng.standard_normal(signal.shape)
        # scale so the empirical variance ratio equals snr exactly
        noise = noise - noise.mean(axis=0)
        noise *= sig_std / (noise.std(axis=0) * np.sqrt(snr))
        Y = signal + noise
    bundle = SignalBundle(
        matrix=Y,
        tr_times=np.asarray(transcript.tr_times),
        subject_ids=(f"sim-{seed}",),
        story_id=transcript.story_id,
    )
    record = GroundTruth(
        provider_spec=asdict(provider.spec),
        planted=tuple(planted),
        snr=snr,
        seed=seed,
        lags=lags,
        n_targets=n_targets,
        story_id=transcript.story_id,
        y_sha256=hashlib.sha256(np.ascontiguousarray(Y).tobytes()).hexdigest(),
    )
    return bundle, record


def regenerate_signals(record, transcript):
    """Rebuild the planted responses from a ground-truth record."""
    provider = SyntheticProvider(SynthProviderSpec(**record.provider_spec))
    bundle, fresh = gen_signals(
        provider,
        transcript,
        planted=record.planted,
        snr=record.snr,
        seed=record.seed,
        lags=record.lags,
        n_targets=record.n_targets,
    )
    if fresh.y_sha256 != record.y_sha256:
        raise ValueError("regenerated responses do not match the recorded digest")
    return bundle


# ---------------------------------------------------------------------------
# planted probe features


def planted_semantic_feature(provider, sentences, seed=0):
    """A lexical readout, centered per part-of-speech so it carries no
    structural information."""
    rng = np.random.default_rng(stable_seed("probe-sem", seed))
    v = rng.standard_normal(provider.spec.r_lex)
    values = provider.component_features(sentences, "lex") @ v
    pos = np.array([t.pos for s in sentences for t in s.tokens])
    out = values.copy()
    for tag in np.unique(pos):
        mask = pos == tag
        out[mask] -= values[mask].mean()
    return out


def planted_syntactic_feature(provider, sentences, seed=0):
    """A readout of the tag-sequence subspace."""
    rng = np.random.default_rng(stable_seed("probe-syn", seed))
    u = rng.standard_normal(provider.spec.r_syn)
    return provider.component_features(sentences, "syn") @ u
