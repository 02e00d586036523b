"""Region averaging, signed-rank testing and step-up FDR correction."""

from __future__ import annotations

import csv
import math
import warnings
from typing import NamedTuple

import numpy as np

from ._validation import as_float_matrix

EXACT_MAX_N = 15


def roi_average(scores, parcellation):
    """Average target columns within each labeled region, per fold.

    Returns (folds x regions array, region labels). Unlabeled targets are
    ignored; regions with no mapped targets are dropped with a warning.
    """
    scores = as_float_matrix(scores, "scores")
    parcellation.check_against(scores.shape[1])
    kept_labels = []
    columns = []
    for region in parcellation.regions:
        targets = parcellation.targets_of(region)
        if not targets:
            warnings.warn(f"region {region!r} has no targets; dropped", stacklevel=2)
            continue
        kept_labels.append(region)
        columns.append(scores[:, targets].mean(axis=1))
    if not columns:
        raise ValueError("no region has any mapped target")
    return np.column_stack(columns), tuple(kept_labels)


class WilcoxonResult(NamedTuple):
    p: float
    n: int  # samples remaining after zero removal
    method: str  # "exact" | "approx" | "degenerate"
    degenerate: bool


def wilcoxon_signed_rank(samples, exact_max_n=EXACT_MAX_N):
    """Two-sided signed-rank test of symmetry around zero.

    Zero differences are dropped. The null distribution is enumerated
    exactly for small n; larger n uses the normal approximation with tie
    and continuity corrections. An all-zero input is degenerate (p = 1).
    """
    d = np.asarray(samples, dtype=np.float64).ravel()
    if d.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(d)):
        raise ValueError("samples must be finite")
    nz = d[d != 0.0]
    if nz.size == 0:
        return WilcoxonResult(p=1.0, n=0, method="degenerate", degenerate=True)
    if nz.size < 5:
        raise ValueError(f"need at least 5 non-zero samples, got {nz.size}")
    ranks = _average_ranks(np.abs(nz))
    w_pos = ranks[nz > 0].sum()
    if nz.size <= exact_max_n:
        p = _exact_two_sided(ranks, w_pos)
        return WilcoxonResult(p=p, n=nz.size, method="exact", degenerate=False)
    p = _approx_two_sided(ranks, w_pos, nz.size)
    return WilcoxonResult(p=p, n=nz.size, method="approx", degenerate=False)


def _average_ranks(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_two_sided(ranks, w_pos):
    """Enumerate all sign assignments; ranks are half-integers so doubling
    keeps every statistic an exact integer."""
    n = ranks.size
    r2 = np.round(2 * ranks).astype(np.int64)
    total2 = int(r2.sum())
    idx = np.arange(2**n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n)) & 1
    w2_all = bits @ r2
    obs = abs(int(round(2 * w_pos)) * 2 - total2)
    extreme = np.abs(2 * w2_all - total2) >= obs
    return float(extreme.sum() / 2**n)


def _approx_two_sided(ranks, w_pos, n):
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(ranks, return_counts=True)
    var -= (counts**3 - counts).sum() / 48.0
    if var <= 0:
        return 1.0
    dev = w_pos - mean
    # continuity correction pulls the statistic half a step toward the mean
    dev = math.copysign(max(abs(dev) - 0.5, 0.0), dev)
    z = dev / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def fdr_bh(pvals, q=0.05):
    """Benjamini-Hochberg step-up adjustment.

    Returns (adjusted p-values in input order, rejection mask at level q).
    """
    p = np.asarray(pvals, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("empty p-value vector")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted_sorted = np.minimum(adjusted_sorted, 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    return adjusted, adjusted <= q


def significance_table(roi_scores_by_component, region_labels, q=0.05):
    """Signed-rank p per region, BH-corrected across regions, per component.

    ``roi_scores_by_component`` maps component name -> folds x regions array.
    Returns rows of (region, component, p_raw, p_adj, reject).
    """
    rows = []
    for component, roi_scores in roi_scores_by_component.items():
        roi_scores = as_float_matrix(roi_scores, component)
        if roi_scores.shape[1] != len(region_labels):
            raise ValueError(
                f"{component}: {roi_scores.shape[1]} regions vs {len(region_labels)} labels"
            )
        p_raw = np.array(
            [wilcoxon_signed_rank(roi_scores[:, j]).p for j in range(roi_scores.shape[1])]
        )
        p_adj, reject = fdr_bh(p_raw, q=q)
        for j, region in enumerate(region_labels):
            rows.append((region, component, float(p_raw[j]), float(p_adj[j]), bool(reject[j])))
    return rows


def write_significance_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "component", "p_raw", "p_adj", "reject"])
        for region, component, p_raw, p_adj, reject in rows:
            writer.writerow([region, component, repr(p_raw), repr(p_adj), int(reject)])


def default_relabel_path():
    """Bundled reporting preset: Brodmann areas to display names."""
    from pathlib import Path

    return Path(__file__).parent / "data_files" / "brodmann_display_names.csv"


def load_relabel_csv(path):
    """Optional reporting preset mapping raw region labels to display names."""
    mapping = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["raw_label", "display_label"]:
            raise ValueError(f"{path}: expected header 'raw_label,display_label'")
        for row in reader:
            if row:
                mapping[row[0].strip()] = row[1].strip()
    return mapping
