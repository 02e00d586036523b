"""Temporal alignment of event-level features to the acquisition grid.

The composite transform bins word-level rows into their nearest acquisition
time, then stacks a fixed number of backward lags so the regression can model
delayed responses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_float_matrix, as_float_vector

DEFAULT_LAGS = 5


@dataclass(frozen=True)
class TrAssignment:
    assignment: np.ndarray  # length M, indices into [0, n_trs)
    n_trs: int

    def __post_init__(self):
        asg = np.asarray(self.assignment, dtype=np.int64).ravel()
        if asg.size and (asg.min() < 0 or asg.max() >= self.n_trs):
            raise ValueError("assignment entries outside [0, n_trs)")
        object.__setattr__(self, "assignment", asg)


@dataclass(frozen=True)
class LaggedDesign:
    """Design matrix with lag blocks ordered newest-to-oldest."""

    matrix: np.ndarray  # N x (lags * d)
    lags: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=np.float64))
        if self.lags < 1:
            raise ValueError("lags must be >= 1")
        if self.matrix.shape[1] % self.lags != 0:
            raise ValueError("column count is not a multiple of lags")


def nearest_tr(onsets, tr_times):
    """Map each event onset to the index of its nearest acquisition time.

    Ties break toward the earlier index.
    """
    tr = as_float_vector(tr_times, "tr_times")
    if tr.size == 0:
        raise ValueError("tr_times is empty")
    if np.any(np.diff(tr) <= 0):
        raise ValueError("tr_times must be strictly increasing")
    onsets = as_float_vector(onsets, "onsets")
    right = np.searchsorted(tr, onsets, side="left")
    right = np.clip(right, 0, tr.size - 1)
    left = np.clip(right - 1, 0, tr.size - 1)
    # earlier index wins on exact ties
    pick_left = np.abs(tr[left] - onsets) <= np.abs(tr[right] - onsets)
    asg = np.where(pick_left, left, right)
    return TrAssignment(assignment=asg, n_trs=tr.size)


def bin_sum(features, assignment):
    """Sum feature rows that share an acquisition bin; empty bins stay zero."""
    feats = as_float_matrix(features, "features")
    asg = assignment.assignment
    if feats.shape[0] != asg.shape[0]:
        raise ValueError(f"{feats.shape[0]} feature rows vs {asg.shape[0]} assignments")
    binned = np.zeros((assignment.n_trs, feats.shape[1]), dtype=np.float64)
    np.add.at(binned, asg, feats)
    return binned


def lag_stack(binned, lags=DEFAULT_LAGS):
    """Stack ``lags`` backward copies column-blockwise, newest block first.

    Rows before the start of the series have no history; those lag columns
    are zero-filled, so every story starts with a clean slate.
    """
    if lags < 1:
        raise ValueError("lags must be >= 1")
    binned = as_float_matrix(binned, "binned")
    n, d = binned.shape
    out = np.zeros((n, lags * d), dtype=np.float64)
    for j in range(min(lags, n)):
        out[j:, j * d : (j + 1) * d] = binned[: n - j]
    return LaggedDesign(matrix=out, lags=lags)


def design_matrix(bundle, tr_times, lags=DEFAULT_LAGS, pre_binned=False):
    """Full event-to-design transform for one story.

    ``pre_binned`` marks bundles already living on the acquisition grid
    (e.g. rate features), which skip the binning step.
    """
    if pre_binned:
        tr = as_float_vector(tr_times, "tr_times")
        if bundle.matrix.shape[0] != tr.size:
            raise ValueError(
                f"pre-binned bundle {bundle.name!r} has {bundle.matrix.shape[0]} rows, "
                f"expected {tr.size}"
            )
        binned = bundle.matrix
    else:
        binned = bin_sum(bundle.matrix, nearest_tr(bundle.onsets, tr_times))
    return lag_stack(binned, lags=lags)


def concat_stories(designs, signals=None):
    """Stack per-story designs rowwise; returns (X, story row ids[, Y]).

    Stories are lag-stacked independently before concatenation, so no story
    leaks history into the next.
    """
    if not designs:
        raise ValueError("no designs to concatenate")
    lags = {d.lags for d in designs}
    if len(lags) > 1:
        raise ValueError(f"mixed lag counts: {sorted(lags)}")
    X = np.vstack([d.matrix for d in designs])
    story_ids = np.concatenate(
        [np.full(d.matrix.shape[0], i, dtype=np.int64) for i, d in enumerate(designs)]
    )
    if signals is None:
        return X, story_ids
    Y = np.vstack([np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in signals])
    if Y.shape[0] != X.shape[0]:
        raise ValueError(f"design rows {X.shape[0]} != signal rows {Y.shape[0]}")
    return X, story_ids, Y
