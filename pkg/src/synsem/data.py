"""Domain types: annotated transcripts, feature/signal bundles, parcellations."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from ._validation import check_finite

ROOT = None  # head sentinel for the root of a dependency tree (-1 on disk)

CONTENT_POS = frozenset({"NOUN", "VERB", "ADJ"})


class SchemaError(ValueError):
    """Raised when an input file violates the transcript schema."""


@dataclass(frozen=True)
class AnnotatedToken:
    text: str
    pos: str
    dep: str
    head: int | None  # index into the sentence, or ROOT (None)
    onset_s: float
    offset_s: float
    is_content: bool = False

    def __post_init__(self):
        if self.onset_s > self.offset_s:
            raise SchemaError(
                f"token {self.text!r}: onset {self.onset_s} > offset {self.offset_s}"
            )


@dataclass(frozen=True)
class Sentence:
    story_id: str
    sentence_index: int
    tokens: tuple[AnnotatedToken, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        _check_heads(self.tokens)
        onsets = [t.onset_s for t in self.tokens]
        if any(a > b for a, b in zip(onsets, onsets[1:])):
            raise SchemaError(
                f"sentence {self.sentence_index} of {self.story_id}: decreasing token onsets"
            )

    def __len__(self):
        return len(self.tokens)

    @property
    def texts(self):
        return tuple(t.text for t in self.tokens)

    @property
    def pos_tags(self):
        return tuple(t.pos for t in self.tokens)

    @property
    def heads(self):
        return tuple(t.head for t in self.tokens)


def _check_heads(tokens):
    """Every head is ROOT or a valid index, and every arc chain reaches ROOT."""
    n = len(tokens)
    for i, tok in enumerate(tokens):
        if tok.head is None:
            continue
        if not 0 <= tok.head < n:
            raise SchemaError(f"token {i}: head {tok.head} outside sentence of length {n}")
        if tok.head == i:
            raise SchemaError(f"token {i}: head points to itself")
    for i in range(n):
        seen = set()
        j = i
        while tokens[j].head is not None:
            if j in seen:
                raise SchemaError(f"token {i}: head arcs form a cycle")
            seen.add(j)
            j = tokens[j].head


@dataclass(frozen=True)
class PhoneEvent:
    label: str
    stress: str
    tone: str
    onset_s: float
    offset_s: float | None = None

    @property
    def triple(self):
        return (self.label, self.stress, self.tone)


@dataclass(frozen=True)
class Transcript:
    story_id: str
    sentences: tuple[Sentence, ...]
    phones: tuple[PhoneEvent, ...] = ()
    tr_times: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "phones", tuple(self.phones))
        object.__setattr__(self, "tr_times", tuple(float(t) for t in self.tr_times))
        for sent in self.sentences:
            if sent.story_id != self.story_id:
                raise SchemaError(
                    f"sentence story {sent.story_id!r} != transcript story {self.story_id!r}"
                )
        trs = self.tr_times
        if any(a >= b for a, b in zip(trs, trs[1:])):
            raise SchemaError(f"story {self.story_id}: tr_times not strictly increasing")
        onsets = [p.onset_s for p in self.phones]
        if any(a > b for a, b in zip(onsets, onsets[1:])):
            raise SchemaError(f"story {self.story_id}: decreasing phone onsets")

    @property
    def n_trs(self):
        return len(self.tr_times)

    def words(self):
        for sent in self.sentences:
            yield from sent.tokens

    @property
    def n_words(self):
        return sum(len(s) for s in self.sentences)

    def word_onsets(self):
        return np.array([t.onset_s for t in self.words()], dtype=np.float64)


@dataclass(frozen=True)
class FeatureBundle:
    """A feature matrix (one row per event) bound to event onset times."""

    name: str
    matrix: np.ndarray  # M x d, float
    onsets: np.ndarray  # length M, seconds
    layer: int | None = None

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        onsets = np.asarray(self.onsets, dtype=np.float64).ravel()
        if matrix.shape[0] != onsets.shape[0]:
            raise ValueError(
                f"bundle {self.name!r}: {matrix.shape[0]} rows vs {onsets.shape[0]} onsets"
            )
        check_finite(matrix, f"bundle {self.name!r}")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "onsets", onsets)

    @property
    def dim(self):
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SignalBundle:
    """Response matrix sampled on the acquisition grid (one column per target)."""

    matrix: np.ndarray  # N x V
    tr_times: np.ndarray  # length N
    subject_ids: tuple[str, ...]
    story_id: str

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        tr_times = np.asarray(self.tr_times, dtype=np.float64).ravel()
        if matrix.shape[0] != tr_times.shape[0]:
            raise ValueError(
                f"signals for {self.story_id}: {matrix.shape[0]} rows vs {tr_times.shape[0]} TRs"
            )
        check_finite(matrix, f"signals for {self.story_id}")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "tr_times", tr_times)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))

    @property
    def n_targets(self):
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ParcellationTable:
    """Target index -> region label. Unmapped targets are simply unlabeled."""

    mapping: dict[int, str]
    regions: tuple[str, ...] = ()

    def __post_init__(self):
        regions = self.regions or tuple(dict.fromkeys(self.mapping.values()))
        object.__setattr__(self, "mapping", dict(self.mapping))
        object.__setattr__(self, "regions", tuple(regions))

    def targets_of(self, region):
        return sorted(i for i, r in self.mapping.items() if r == region)

    def check_against(self, n_targets):
        bad = [i for i in self.mapping if not 0 <= i < n_targets]
        if bad:
            raise ValueError(f"parcellation maps targets {bad[:5]} outside [0, {n_targets})")


# ---------------------------------------------------------------------------
# loaders


def _require(obj, key, line_no, path):
    if key not in obj:
        raise SchemaError(f"{path}:{line_no}: missing key {key!r}")
    return obj[key]


def _token_from_json(obj, line_no, path):
    try:
        head = int(_require(obj, "head", line_no, path))
        pos = str(_require(obj, "pos", line_no, path))
        return AnnotatedToken(
            text=str(_require(obj, "text", line_no, path)),
            pos=pos,
            dep=str(_require(obj, "dep", line_no, path)),
            head=ROOT if head == -1 else head,
            onset_s=float(_require(obj, "onset", line_no, path)),
            offset_s=float(_require(obj, "offset", line_no, path)),
            is_content=pos in CONTENT_POS,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{path}:{line_no}: bad token field ({exc})") from exc


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON ({exc})") from exc


def load_sentences(path):
    """Read sentence-per-line JSONL into validated Sentence objects."""
    sentences = []
    for line_no, obj in _iter_jsonl(path):
        tokens = [
            _token_from_json(t, line_no, path)
            for t in _require(obj, "tokens", line_no, path)
        ]
        try:
            sentences.append(
                Sentence(
                    story_id=str(_require(obj, "story", line_no, path)),
                    sentence_index=int(_require(obj, "sent_index", line_no, path)),
                    tokens=tuple(tokens),
                )
            )
        except SchemaError as exc:
            raise SchemaError(f"{path}:{line_no}: {exc}") from exc
    return sentences


def load_phones(path):
    phones = []
    for line_no, obj in _iter_jsonl(path):
        offset = obj.get("offset")
        phones.append(
            PhoneEvent(
                label=str(_require(obj, "label", line_no, path)),
                stress=str(_require(obj, "stress", line_no, path)),
                tone=str(_require(obj, "tone", line_no, path)),
                onset_s=float(_require(obj, "onset", line_no, path)),
                offset_s=None if offset is None else float(offset),
            )
        )
    return phones


def load_transcript(sentences_path, meta_path, phones_path=None):
    """Assemble a validated Transcript from its three on-disk pieces."""
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    story = str(_require(meta, "story", 1, meta_path))
    tr_times = _require(meta, "tr_times", 1, meta_path)
    sentences = load_sentences(sentences_path)
    for sent in sentences:
        if sent.story_id != story:
            raise SchemaError(
                f"{sentences_path}: sentence story {sent.story_id!r} != metadata story {story!r}"
            )
    phones = load_phones(phones_path) if phones_path else []
    try:
        return Transcript(
            story_id=story,
            sentences=tuple(sentences),
            phones=tuple(phones),
            tr_times=tuple(float(t) for t in tr_times),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{meta_path}: {exc}") from exc


def save_transcript(transcript, sentences_path, meta_path, phones_path=None):
    with open(sentences_path, "w", encoding="utf-8") as fh:
        for sent in transcript.sentences:
            fh.write(json.dumps(sentence_to_json(sent)) + "\n")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump({"story": transcript.story_id, "tr_times": list(transcript.tr_times)}, fh)
        fh.write("\n")
    if phones_path is not None:
        with open(phones_path, "w", encoding="utf-8") as fh:
            for ph in transcript.phones:
                fh.write(
                    json.dumps(
                        {
                            "label": ph.label,
                            "stress": ph.stress,
                            "tone": ph.tone,
                            "onset": ph.onset_s,
                            "offset": ph.offset_s,
                        }
                    )
                    + "\n"
                )


def sentence_to_json(sent):
    return {
        "story": sent.story_id,
        "sent_index": sent.sentence_index,
        "tokens": [
            {
                "text": t.text,
                "pos": t.pos,
                "dep": t.dep,
                "head": -1 if t.head is None else t.head,
                "onset": t.onset_s,
                "offset": t.offset_s,
            }
            for t in sent.tokens
        ],
    }


def load_parcellation(path):
    """Parcellation CSV with header ``target_index,region_label``."""
    mapping = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["target_index", "region_label"]:
            raise SchemaError(f"{path}: expected header 'target_index,region_label'")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                idx = int(row[0])
            except ValueError as exc:
                raise SchemaError(f"{path}:{row_no}: bad target index {row[0]!r}") from exc
            mapping[idx] = row[1].strip()
    return ParcellationTable(mapping=mapping)


# ---------------------------------------------------------------------------
# subject averaging


def average_subjects(signals):
    """Elementwise mean of same-story signal bundles; provenance is concatenated."""
    if not signals:
        raise ValueError("no signal bundles to average")
    first = signals[0]
    for s in signals[1:]:
        if s.story_id != first.story_id:
            raise ValueError(f"story mismatch: {s.story_id!r} vs {first.story_id!r}")
        if s.matrix.shape != first.matrix.shape:
            raise ValueError(
                f"shape mismatch for {s.story_id}: {s.matrix.shape} vs {first.matrix.shape}"
            )
        if not np.array_equal(s.tr_times, first.tr_times):
            raise ValueError(f"tr_times mismatch for {s.story_id}")
    stacked = np.stack([s.matrix for s in signals])
    subject_ids = tuple(sid for s in signals for sid in s.subject_ids)
    return SignalBundle(
        matrix=stacked.mean(axis=0),
        tr_times=first.tr_times,
        subject_ids=subject_ids,
        story_id=first.story_id,
    )
