"""Synthesis of structure-matched sentence variants and averaged embeddings.

For a target sentence, candidates are sampled word-by-word under the same
part-of-speech and dependency tags, filtered by length, tag sequence and
dependency-tree similarity, and the surviving variants' activations are
averaged. Word-specific content averages out across variants while the
shared structural component survives, so the average estimates the
structure-driven part of the representation; a cosine convergence curve
diagnoses how fast.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._seeding import stable_seed
from .data import AnnotatedToken, Sentence
from .dten import load_tensor

DEFAULT_K = 10
DEFAULT_K_PRIME = 100
DEFAULT_SIMILARITY_THRESHOLD = 0.90


# ---------------------------------------------------------------------------
# lexicon


@dataclass(frozen=True)
class Lexicon:
    """Tag-indexed sampling vocabulary with a part-of-speech backoff index."""

    by_pos_dep: dict  # (pos, dep) -> list of (word, count)
    by_pos: dict  # pos -> list of (word, count)

    def words_for(self, pos, dep):
        """Sampling pool for a tag pair: exact key, else POS backoff, else []."""
        pool = self.by_pos_dep.get((pos, dep))
        if pool:
            return pool
        return self.by_pos.get(pos, [])


def build_lexicon(corpus):
    """Count words under their (pos, dep) keys across a sentence corpus."""
    pairs = {}
    pos_only = {}
    for sent in corpus:
        for tok in sent.tokens:
            pairs.setdefault((tok.pos, tok.dep), {}).setdefault(tok.text, 0)
            pairs[(tok.pos, tok.dep)][tok.text] += 1
            pos_only.setdefault(tok.pos, {}).setdefault(tok.text, 0)
            pos_only[tok.pos][tok.text] += 1
    as_sorted = lambda d: {k: sorted(v.items()) for k, v in d.items()}
    return Lexicon(by_pos_dep=as_sorted(pairs), by_pos=as_sorted(pos_only))


def save_lexicon(lexicon, path):
    with open(path, "w", encoding="utf-8") as fh:
        for (pos, dep), words in sorted(lexicon.by_pos_dep.items()):
            fh.write(
                json.dumps({"pos": pos, "dep": dep, "words": [{"w": w, "f": f} for w, f in words]})
                + "\n"
            )


def load_lexicon(path):
    pairs = {}
    pos_only = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            words = [(entry["w"], int(entry["f"])) for entry in obj["words"]]
            pairs[(obj["pos"], obj["dep"])] = words
            pool = pos_only.setdefault(obj["pos"], {})
            for w, f in words:
                pool[w] = pool.get(w, 0) + f
    return Lexicon(by_pos_dep=pairs, by_pos={k: sorted(v.items()) for k, v in pos_only.items()})


# ---------------------------------------------------------------------------
# candidate synthesis


class CandidateSet(NamedTuple):
    sentences: list
    copied: np.ndarray  # per candidate: True if any token fell back to a copy


def synthesize_variants(target, lexicon, k_prime=DEFAULT_K_PRIME, seed=0, weighted=False):
    """Sample ``k_prime`` candidate sentences sharing the target's tags.

    Each token draws a replacement word from the lexicon pool of its
    (pos, dep) pair, backing off to the part-of-speech pool; with both pools
    empty the target word is copied and the candidate marked.
    """
    if k_prime < 1:
        raise ValueError("k_prime must be >= 1")
    rng = np.random.default_rng(seed)
    # one vectorized draw per token position covers all candidates
    draws = []
    copied = np.zeros(k_prime, dtype=bool)
    for tok in target.tokens:
        pool = lexicon.words_for(tok.pos, tok.dep)
        if not pool:
            draws.append(None)
            copied[:] = True
            continue
        words = [w for w, _ in pool]
        if weighted:
            counts = np.array([f for _, f in pool], dtype=np.float64)
            idx = rng.choice(len(words), size=k_prime, p=counts / counts.sum())
        else:
            idx = rng.integers(0, len(words), size=k_prime)
        draws.append([words[i] for i in idx])
    sentences = []
    for c in range(k_prime):
        tokens = tuple(
            tok
            if texts is None
            else AnnotatedToken(
                text=texts[c],
                pos=tok.pos,
                dep=tok.dep,
                head=tok.head,
                onset_s=tok.onset_s,
                offset_s=tok.offset_s,
                is_content=tok.is_content,
            )
            for tok, texts in zip(target.tokens, draws)
        )
        sentences.append(
            Sentence(story_id=target.story_id, sentence_index=target.sentence_index, tokens=tokens)
        )
    return CandidateSet(sentences=sentences, copied=copied)


def variant_seed(global_seed, story_id, sentence_index):
    """Per-sentence stream so synthesis is independent of scheduling."""
    return global_seed ^ stable_seed(story_id, sentence_index)


# ---------------------------------------------------------------------------
# dependency-tree geometry


def head_distances(heads):
    """All-pairs hop counts on the undirected tree described by head links."""
    n = len(heads)
    adj = [[] for _ in range(n)]
    for i, h in enumerate(heads):
        if h is None:
            continue
        if not isinstance(h, (int, np.integer)) or not 0 <= h < n or h == i:
            raise ValueError(f"token {i}: invalid head {h!r}")
        adj[i].append(int(h))
        adj[int(h)].append(i)
    dist = np.full((n, n), -1, dtype=np.int64)
    for start in range(n):
        dist[start, start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if dist[start, v] < 0:
                    dist[start, v] = dist[start, u] + 1
                    queue.append(v)
    if np.any(dist < 0):
        raise ValueError("head links do not form a connected tree")
    return dist


def tree_pairwise_distances(sentence):
    return head_distances(sentence.heads)


def tree_similarity(a, b):
    """Pearson correlation of the two trees' pairwise-distance patterns.

    Returns None when undefined: fewer than 3 tokens (not enough distinct
    pairs) or a degenerate constant distance pattern. Treated as a non-match
    by the selection step.
    """
    if len(a) != len(b):
        raise ValueError(f"sentences differ in length: {len(a)} vs {len(b)}")
    if len(a) < 3:
        return None
    if a.heads == b.heads:
        return 1.0
    iu = np.triu_indices(len(a), k=1)
    da = head_distances(a.heads)[iu].astype(np.float64)
    db = head_distances(b.heads)[iu].astype(np.float64)
    da -= da.mean()
    db -= db.mean()
    na = np.sqrt((da**2).sum())
    nb = np.sqrt((db**2).sum())
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.clip((da * db).sum() / (na * nb), -1.0, 1.0))


# ---------------------------------------------------------------------------
# variant selection


@dataclass(frozen=True)
class VariantSet:
    target: Sentence
    variants: tuple  # of Sentence
    similarities: tuple  # of float, aligned with variants
    requested_k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "similarities", tuple(float(s) for s in self.similarities))
        if len(self.similarities) != len(self.variants):
            raise ValueError("one similarity per variant required")
        for v in self.variants:
            if len(v) != len(self.target) or v.pos_tags != self.target.pos_tags:
                raise ValueError("variant does not match target length/POS sequence")
            if v.texts == self.target.texts:
                raise ValueError("variant equals the target sentence")

    def __len__(self):
        return len(self.variants)

    @property
    def short(self):
        """True when selection could not fill the requested k."""
        return len(self.variants) < self.requested_k


def select_variants(candidates, target, k=DEFAULT_K, threshold=DEFAULT_SIMILARITY_THRESHOLD):
    """Filter candidates and keep the k most tree-similar ones.

    Candidates equal to the target, of different length or part-of-speech
    sequence, with undefined similarity, or below the threshold are
    discarded. Survivors are ranked by similarity, descending (stable, so
    earlier candidates win ties). A set with fewer than k survivors is
    returned as-is and flags itself via ``short``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = []
    for cand in candidates:
        if len(cand) != len(target) or cand.pos_tags != target.pos_tags:
            continue
        if cand.texts == target.texts:
            continue
        sim = tree_similarity(cand, target)
        if sim is None or sim < threshold:
            continue
        scored.append((cand, sim))
    scored.sort(key=lambda pair: -pair[1])
    kept = scored[:k]
    return VariantSet(
        target=target,
        variants=tuple(c for c, _ in kept),
        similarities=tuple(s for _, s in kept),
        requested_k=k,
    )


def save_variant_sets(variant_sets, path):
    """Audit trail of what was selected for each target sentence."""
    with open(path, "w", encoding="utf-8") as fh:
        for vset in variant_sets:
            fh.write(
                json.dumps(
                    {
                        "story": vset.target.story_id,
                        "sent_index": vset.target.sentence_index,
                        "target": list(vset.target.texts),
                        "requested_k": vset.requested_k,
                        "variants": [
                            {"texts": list(v.texts), "similarity": s}
                            for v, s in zip(vset.variants, vset.similarities)
                        ],
                    }
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# embedding providers and averaging


class EmbeddingProvider:
    """Contract: deterministic per-sentence activations.

    Implementations expose ``n_layers``, ``dim`` and
    ``activations(sentence, layer) -> (len(sentence), dim) array``.
    """

    n_layers: int
    dim: int

    def activations(self, sentence, layer):
        raise NotImplementedError


class FileProvider(EmbeddingProvider):
    """Activations read from per-(story, layer) tensor files.

    Rows are located through the transcript's sentence boundaries, so the
    file row count must equal the story's word count.
    """

    def __init__(self, transcripts, matrices):
        """``matrices``: {story_id: {layer: (n_words, dim) array}}."""
        self._rows = {}
        self._matrices = {}
        dims = set()
        layers = set()
        for tr in transcripts:
            if tr.story_id not in matrices:
                raise ValueError(f"no activations for story {tr.story_id!r}")
            offset = 0
            for sent in tr.sentences:
                self._rows[(tr.story_id, sent.sentence_index)] = (offset, offset + len(sent))
                offset += len(sent)
            for layer, mat in matrices[tr.story_id].items():
                mat = np.asarray(mat, dtype=np.float64)
                if mat.shape[0] != offset:
                    raise ValueError(
                        f"story {tr.story_id!r} layer {layer}: {mat.shape[0]} rows "
                        f"for {offset} words"
                    )
                self._matrices[(tr.story_id, layer)] = mat
                dims.add(mat.shape[1])
                layers.add(layer)
        if len(dims) != 1:
            raise ValueError(f"inconsistent activation dims: {sorted(dims)}")
        self.dim = dims.pop()
        self.n_layers = max(layers) + 1

    @classmethod
    def from_dten(cls, transcripts, paths):
        """``paths``: {story_id: {layer: dten path}}."""
        matrices = {
            story: {layer: load_tensor(p) for layer, p in by_layer.items()}
            for story, by_layer in paths.items()
        }
        return cls(transcripts, matrices)

    def activations(self, sentence, layer):
        key = (sentence.story_id, sentence.sentence_index)
        if key not in self._rows:
            raise KeyError(f"no rows recorded for sentence {key}")
        mat = self._matrices.get((sentence.story_id, layer))
        if mat is None:
            raise KeyError(f"no activations for story {sentence.story_id!r} layer {layer}")
        lo, hi = self._rows[key]
        if hi - lo != len(sentence):
            raise ValueError(f"sentence {key} length changed since indexing")
        return mat[lo:hi]


@dataclass(frozen=True)
class SyntacticEmbedding:
    """Mean activation across structure-matched variants, row-aligned to the
    target's tokens."""

    matrix: np.ndarray  # M x d
    k: int
    layer: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=np.float64))


def syntactic_embedding(provider, variant_set, layer):
    if len(variant_set) == 0:
        raise ValueError("variant set is empty")
    acc = None
    for variant in variant_set.variants:
        act = np.asarray(provider.activations(variant, layer), dtype=np.float64)
        acc = act.copy() if acc is None else acc + act
    return SyntacticEmbedding(
        matrix=acc / len(variant_set), k=len(variant_set), layer=layer
    )


def convergence_curve(provider, variant_set, layer, k_max=None):
    """Cosine similarity between successive running means of the variant
    activations, for K = 2 .. k_max. Zero-norm entries are NaN."""
    k_max = len(variant_set) if k_max is None else k_max
    if k_max > len(variant_set):
        raise ValueError(f"k_max {k_max} exceeds {len(variant_set)} variants")
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    curve = []
    acc = None
    prev_mean = None
    for i, variant in enumerate(variant_set.variants[:k_max], start=1):
        act = np.asarray(provider.activations(variant, layer), dtype=np.float64)
        acc = act.copy() if acc is None else acc + act
        mean = (acc / i).ravel()
        if prev_mean is not None:
            na = np.linalg.norm(mean)
            nb = np.linalg.norm(prev_mean)
            if na == 0.0 or nb == 0.0:
                curve.append((i, float("nan")))
            else:
                curve.append((i, float(mean @ prev_mean / (na * nb))))
        prev_mean = mean
    return curve
