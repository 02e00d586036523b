"""Phonological baseline features and low-level control stimuli.

Rate features are produced directly on the acquisition grid (they count
events per bin), so they enter the design path as pre-binned bundles and
share the lag-stacking code with everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .align import bin_sum, nearest_tr
from .data import AnnotatedToken, FeatureBundle, Sentence


@dataclass(frozen=True)
class PhoneVocabulary:
    """Stable index over unique (phone, stress, tone) triples."""

    triples: tuple

    def __post_init__(self):
        triples = tuple(self.triples)
        if len(set(triples)) != len(triples):
            raise ValueError("duplicate phone triples")
        object.__setattr__(self, "triples", triples)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(triples)})

    def __len__(self):
        return len(self.triples)

    def index_of(self, triple):
        return self._index.get(triple)

    @classmethod
    def from_transcripts(cls, transcripts):
        """Lexicographic ordering keeps the index reproducible."""
        triples = {ph.triple for tr in transcripts for ph in tr.phones}
        return cls(triples=tuple(sorted(triples)))


def _event_rate(onsets, transcript, name):
    if transcript.n_trs == 0:
        raise ValueError(f"story {transcript.story_id}: empty tr_times")
    counts = np.zeros((transcript.n_trs, 1))
    if len(onsets):
        asg = nearest_tr(np.asarray(onsets, dtype=np.float64), transcript.tr_times)
        counts = bin_sum(np.ones((len(onsets), 1)), asg)
    return FeatureBundle(name=name, matrix=counts, onsets=np.asarray(transcript.tr_times))


def word_rate(transcript):
    """Words per acquisition bin (nearest-time assignment), as an N x 1 bundle."""
    return _event_rate([t.onset_s for t in transcript.words()], transcript, "word_rate")


def phone_rate(transcript):
    """Phone events per acquisition bin, as an N x 1 bundle."""
    return _event_rate([p.onset_s for p in transcript.phones], transcript, "phone_rate")


def phone_category_onehot(transcript, vocab):
    """One-hot phone identity rows, one per phone event.

    Triples missing from the vocabulary (possible on held-out stories) get
    an all-zero row.
    """
    onehot = np.zeros((len(transcript.phones), len(vocab)))
    for m, ph in enumerate(transcript.phones):
        idx = vocab.index_of(ph.triple)
        if idx is not None:
            onehot[m, idx] = 1.0
    return FeatureBundle(
        name="phone_categories",
        matrix=onehot,
        onsets=np.array([p.onset_s for p in transcript.phones], dtype=np.float64),
    )


def phonological_features(transcript, vocab):
    """Concatenated baseline: word rate, phone rate and binned phone
    categories on the acquisition grid (pre-binned N x (2 + |vocab|))."""
    wr = word_rate(transcript).matrix
    pr = phone_rate(transcript).matrix
    onehot = phone_category_onehot(transcript, vocab)
    if len(transcript.phones):
        cats = bin_sum(onehot.matrix, nearest_tr(onehot.onsets, transcript.tr_times))
    else:
        cats = np.zeros((transcript.n_trs, len(vocab)))
    return FeatureBundle(
        name="phonological",
        matrix=np.hstack([wr, pr, cats]),
        onsets=np.asarray(transcript.tr_times),
    )


# ---------------------------------------------------------------------------
# control stimuli


def _with_texts(sentence, texts):
    tokens = tuple(
        AnnotatedToken(
            text=text,
            pos=tok.pos,
            dep=tok.dep,
            head=tok.head,
            onset_s=tok.onset_s,
            offset_s=tok.offset_s,
            is_content=tok.is_content,
        )
        for tok, text in zip(sentence.tokens, texts)
    )
    return Sentence(
        story_id=sentence.story_id, sentence_index=sentence.sentence_index, tokens=tokens
    )


def control_random_words(transcript, seed):
    """Replace every word with a uniform draw from the story's word multiset
    (punctuation included); onsets and sentence boundaries are retained."""
    words = [t.text for t in transcript.words()]
    if not words:
        raise ValueError(f"story {transcript.story_id} has no words")
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(words), size=len(words))
    out = []
    cursor = 0
    for sent in transcript.sentences:
        texts = [words[draws[cursor + i]] for i in range(len(sent))]
        cursor += len(sent)
        out.append(_with_texts(sent, texts))
    return out


def control_shuffle_within_sentence(transcript, seed):
    """Shuffle word order inside each sentence; onsets stay positional."""
    rng = np.random.default_rng(seed)
    out = []
    for sent in transcript.sentences:
        perm = rng.permutation(len(sent))
        out.append(_with_texts(sent, [sent.tokens[j].text for j in perm]))
    return out


class MatchLengthResult(NamedTuple):
    sentences: list
    skipped: list  # (story_id, sentence_index) lacking a same-length donor


def control_match_length_sentences(transcript, donor_corpus, seed):
    """Swap each sentence for a random same-length donor sentence.

    The donor's words (and tags) are adopted; the stimulus onsets are
    reassigned positionally. Sentences with no same-length donor are
    skipped and reported.
    """
    by_length = {}
    for donor in donor_corpus:
        by_length.setdefault(len(donor), []).append(donor)
    rng = np.random.default_rng(seed)
    out = []
    skipped = []
    for sent in transcript.sentences:
        donors = by_length.get(len(sent))
        if not donors:
            skipped.append((sent.story_id, sent.sentence_index))
            continue
        donor = donors[rng.integers(0, len(donors))]
        tokens = tuple(
            AnnotatedToken(
                text=d.text,
                pos=d.pos,
                dep=d.dep,
                head=d.head,
                onset_s=tok.onset_s,
                offset_s=tok.offset_s,
                is_content=d.is_content,
            )
            for d, tok in zip(donor.tokens, sent.tokens)
        )
        out.append(
            Sentence(story_id=sent.story_id, sentence_index=sent.sentence_index, tokens=tokens)
        )
    return MatchLengthResult(sentences=out, skipped=skipped)
