"""Score arithmetic: split correlation tables into lexical, compositional,
syntactic and semantic components, and express them as gains over the
phonological baseline.

All arithmetic is elementwise per (fold, target), so downstream statistics
keep paired fold samples. Components defined as score differences are
unchanged by the baseline subtraction (it cancels), so their "gain" view
equals their raw view.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

COMPONENTS = (
    "lexical",
    "compositional_strict",
    "syntactic",
    "semantic",
    "lexical_syntax",
    "lexical_semantics",
)

# components that are raw scores of a single feature set (their gain view
# subtracts the baseline); the rest are differences already
_SINGLE_TABLE = {"lexical", "syntactic", "lexical_syntax"}


@dataclass(frozen=True)
class DecompositionReport:
    raw: dict  # component -> folds x targets
    gain: dict  # component -> folds x targets
    provenance: dict = field(default_factory=dict)

    @property
    def n_folds(self):
        return next(iter(self.raw.values())).shape[0]

    @property
    def n_targets(self):
        return next(iter(self.raw.values())).shape[1]


def _aligned(tables):
    shapes = {t.scores.shape for t in tables if t is not None}
    if len(shapes) > 1:
        raise ValueError(f"score tables disagree in shape: {sorted(shapes)}")
    folds = {t.meta.get("folds", t.n_folds) for t in tables if t is not None}
    if len(folds) > 1:
        raise ValueError(f"score tables come from different fold plans: {sorted(folds)}")


def decompose_scores(phono, lexical_full, deep_full, lexical_syntax=None, deep_syntax=None):
    """Build the component report from five score tables.

    Arguments are ScoreTables for: the phonological baseline, the word
    embedding (layer 0), a deep layer, and the syntax-averaged variants of
    each. ``lexical_syntax`` may be omitted; the two lexical split panels are
    then unavailable.
    """
    if deep_syntax is None:
        raise ValueError("deep_syntax score table is required")
    _aligned([phono, lexical_full, deep_full, lexical_syntax, deep_syntax])
    base = phono.scores
    x0 = lexical_full.scores
    xl = deep_full.scores
    bxl = deep_syntax.scores

    raw = {
        "lexical": x0.copy(),
        "compositional_strict": xl - x0,
        "syntactic": bxl.copy(),
        "semantic": xl - bxl,
    }
    if lexical_syntax is not None:
        bx0 = lexical_syntax.scores
        raw["lexical_syntax"] = bx0.copy()
        raw["lexical_semantics"] = x0 - bx0
    gain = {
        name: (values - base if name in _SINGLE_TABLE else values.copy())
        for name, values in raw.items()
    }
    provenance = {
        "phono": phono.feature_set,
        "lexical_full": lexical_full.feature_set,
        "deep_full": deep_full.feature_set,
        "deep_syntax": deep_syntax.feature_set,
    }
    if lexical_syntax is not None:
        provenance["lexical_syntax"] = lexical_syntax.feature_set
    return DecompositionReport(raw=raw, gain=gain, provenance=provenance)


def score_contrast(table_a, table_b):
    """Elementwise score difference between two aligned tables.

    Feeding the score of a concatenated feature set as ``table_a`` gives the
    concatenation-style contrast; feeding a plain feature set gives the
    subtraction-style one.
    """
    _aligned([table_a, table_b])
    return table_a.scores - table_b.scores


def write_decomposition_csv(report, path, mode="subtraction"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "mode", "fold", "target", "value"])
        for view, values_by_name in (("raw", report.raw), ("gain", report.gain)):
            for name, values in values_by_name.items():
                label = name if view == "raw" else f"{name}_gain"
                for fold in range(values.shape[0]):
                    for target in range(values.shape[1]):
                        writer.writerow(
                            [label, mode, fold, target, repr(float(values[fold, target]))]
                        )


def read_decomposition_csv(path):
    values = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cells = [(r["component"], int(r["fold"]), int(r["target"]), float(r["value"])) for r in reader]
    if not cells:
        raise ValueError(f"{path}: empty decomposition table")
    for name, fold, target, value in cells:
        values.setdefault(name, {})[(fold, target)] = value
    out = {}
    for name, entries in values.items():
        folds = max(f for f, _ in entries) + 1
        targets = max(t for _, t in entries) + 1
        arr = np.full((folds, targets), np.nan)
        for (f, t), v in entries.items():
            arr[f, t] = v
        out[name] = arr
    return out
