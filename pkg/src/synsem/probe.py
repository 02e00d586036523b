"""Linear decoding of token-level features from embedding matrices.

Continuous features are decoded with ridge regression (R^2, averaged
uniformly across target dimensions); categorical features with a
regularized least-squares classifier scored by adjusted balanced accuracy,
so chance sits at zero for both kinds.
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from ._validation import as_float_matrix
from .encode import RidgeLOO, fold_plan

PROBE_LAMBDA_GRID = tuple(np.logspace(-3, 6, 10))
DEFAULT_PROBE_FOLDS = 10


def adjusted_balanced_accuracy(y_true, y_pred, n_classes):
    """Mean per-class recall, rescaled so chance = 0 and perfect = 1.

    Every class in [0, n_classes) must occur in ``y_true``.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must align")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    recalls = []
    for c in range(n_classes):
        mask = y_true == c
        if not mask.any():
            raise ValueError(f"class {c} absent from y_true")
        recalls.append((y_pred[mask] == c).mean())
    chance = 1.0 / n_classes
    return (float(np.mean(recalls)) - chance) / (1.0 - chance)


class ProbeResult(NamedTuple):
    mean: float
    sem: float
    fold_scores: np.ndarray
    kind: str


def probe_decode(
    embeddings,
    target,
    kind,
    folds=DEFAULT_PROBE_FOLDS,
    alphas=PROBE_LAMBDA_GRID,
    mask=None,
):
    """Cross-validated linear decoding of ``target`` from ``embeddings``.

    ``mask`` optionally restricts the rows used (e.g. content words only).
    Returns the mean score across folds and its standard error.
    """
    X = as_float_matrix(embeddings, "embeddings")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).ravel()
        if mask.shape[0] != X.shape[0]:
            raise ValueError("mask length does not match embeddings")
        X = X[mask]
        target = np.asarray(target)[mask]
    if X.shape[0] < folds:
        raise ValueError(f"{X.shape[0]} tokens cannot fill {folds} folds")

    if kind == "continuous":
        scores = _decode_continuous(X, target, folds, alphas)
    elif kind == "categorical":
        scores = _decode_categorical(X, target, folds, alphas)
    else:
        raise ValueError(f"unknown probe kind {kind!r}")
    sem = float(scores.std(ddof=1) / np.sqrt(len(scores))) if len(scores) > 1 else 0.0
    return ProbeResult(mean=float(scores.mean()), sem=sem, fold_scores=scores, kind=kind)


def _decode_continuous(X, target, folds, alphas):
    Y = as_float_matrix(target, "target")
    scores = np.empty(folds)
    for k, (train, test) in enumerate(fold_plan(X.shape[0], folds).splits):
        model = RidgeLOO(alphas=alphas, alpha_per_target=False, fit_intercept=True)
        model.fit(X[train], Y[train])
        pred = model.predict(X[test])
        scores[k] = _r2_uniform(Y[test], pred)
    return scores


def _r2_uniform(y_true, y_pred):
    """Per-dimension R^2 against the test-block mean, averaged uniformly."""
    resid = ((y_true - y_pred) ** 2).sum(axis=0)
    total = ((y_true - y_true.mean(axis=0)) ** 2).sum(axis=0)
    ok = total > 0
    r2 = np.zeros(y_true.shape[1])
    r2[ok] = 1.0 - resid[ok] / total[ok]
    return float(r2.mean())


def _decode_categorical(X, target, folds, alphas):
    labels = np.asarray(target)
    classes, encoded = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise ValueError("categorical target has fewer than 2 classes")
    onehot = np.full((labels.size, classes.size), -1.0)
    onehot[np.arange(labels.size), encoded] = 1.0
    scores = np.empty(folds)
    for k, (train, test) in enumerate(fold_plan(labels.size, folds).splits):
        model = RidgeLOO(alphas=alphas, alpha_per_target=False, fit_intercept=True)
        model.fit(X[train], onehot[train])
        pred = np.argmax(model.predict(X[test]), axis=1)
        true = encoded[test]
        # chance level follows the classes present in this test block
        present = np.unique(true)
        remap = {c: i for i, c in enumerate(present)}
        true_r = np.array([remap[c] for c in true])
        pred_r = np.array([remap.get(c, -1) for c in pred])
        scores[k] = adjusted_balanced_accuracy(true_r, pred_r, n_classes=present.size)
    return scores


# ---------------------------------------------------------------------------
# feature extractors


def pos_labels(sentences):
    return [tok.pos for sent in sentences for tok in sent.tokens]


def tree_depths(sentences):
    """Arc count from each token to its sentence root."""
    depths = []
    for sent in sentences:
        for i, tok in enumerate(sent.tokens):
            d = 0
            j = i
            while sent.tokens[j].head is not None:
                j = sent.tokens[j].head
                d += 1
            depths.append(d)
    return np.array(depths, dtype=np.float64)


def content_mask(sentences):
    return np.array(
        [tok.is_content for sent in sentences for tok in sent.tokens], dtype=bool
    )


# ---------------------------------------------------------------------------
# file-supplied probe targets


def load_probe_targets(path):
    """JSONL rows {story, sent_index, token_index, name, value|vector|class}
    grouped by feature name."""
    by_name = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            key = (obj["story"], int(obj["sent_index"]), int(obj["token_index"]))
            if "value" in obj:
                payload = float(obj["value"])
            elif "vector" in obj:
                payload = np.asarray(obj["vector"], dtype=np.float64)
            elif "class" in obj:
                payload = str(obj["class"])
            else:
                raise ValueError(f"{path}:{line_no}: row has no value/vector/class")
            by_name.setdefault(obj["name"], {})[key] = payload
    return by_name


def align_probe_targets(sentences, table):
    """Match a {(story, sent_index, token_index): payload} table to a token
    stream. Returns (values array or list, availability mask)."""
    values = []
    available = []
    for sent in sentences:
        for i, _ in enumerate(sent.tokens):
            key = (sent.story_id, sent.sentence_index, i)
            if key in table:
                values.append(table[key])
                available.append(True)
            else:
                values.append(None)
                available.append(False)
    return values, np.array(available, dtype=bool)
