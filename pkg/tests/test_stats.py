import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synsem.data import ParcellationTable
from synsem.stats import fdr_bh, roi_average, significance_table, wilcoxon_signed_rank

# ---------------------------------------------------------------------------
# roi averaging


def test_roi_average_basic():
    parc = ParcellationTable(mapping={0: "A", 1: "A"})
    scores = np.array([[0.1, 0.3], [0.5, 0.7]])
    out, labels = roi_average(scores, parc)
    assert labels == ("A",)
    assert np.allclose(out, [[0.2], [0.6]])


def test_roi_average_ignores_unlabeled():
    parc = ParcellationTable(mapping={0: "A"})
    scores = np.array([[0.1, 99.0]])
    out, _ = roi_average(scores, parc)
    assert np.allclose(out, [[0.1]])


def test_roi_average_preserves_folds():
    parc = ParcellationTable(mapping={0: "A", 1: "B"})
    scores = np.random.default_rng(0).standard_normal((7, 2))
    out, labels = roi_average(scores, parc)
    assert out.shape == (7, 2)


def test_roi_average_drops_empty_region_with_warning():
    parc = ParcellationTable(mapping={0: "A"}, regions=("A", "GHOST"))
    with pytest.warns(UserWarning, match="GHOST"):
        out, labels = roi_average(np.ones((2, 1)), parc)
    assert labels == ("A",)


def test_roi_average_commutes_with_fold_mean():
    rng = np.random.default_rng(1)
    parc = ParcellationTable(mapping={i: "AB"[i % 2] for i in range(6)})
    scores = rng.standard_normal((9, 6))
    out, _ = roi_average(scores, parc)
    folded, _ = roi_average(scores.mean(axis=0, keepdims=True), parc)
    assert np.allclose(out.mean(axis=0, keepdims=True), folded)


# ---------------------------------------------------------------------------
# wilcoxon


def _enumeration_oracle(diffs):
    """Brute force over every sign assignment (independent of the
    implementation's vectorized path)."""
    d = [x for x in diffs if x != 0]
    n = len(d)
    mags = sorted(abs(x) for x in d)
    ranks = []
    for x in d:
        tied = [i for i, m in enumerate(mags) if m == abs(x)]
        ranks.append(sum(tied) / len(tied) + 1.0)
    w_obs = sum(r for r, x in zip(ranks, d) if x > 0)
    total = sum(ranks)
    center = total / 2.0
    count = 0
    for signs in itertools.product([0, 1], repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if abs(w - center) >= abs(w_obs - center) - 1e-12:
            count += 1
    return count / 2**n


def test_wilcoxon_five_positive_diffs():
    res = wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0])
    assert res.method == "exact"
    assert res.p == pytest.approx(2 / 32)


def test_wilcoxon_all_zero_is_degenerate():
    res = wilcoxon_signed_rank([0.0, 0.0, 0.0])
    assert res.degenerate and res.p == 1.0


def test_wilcoxon_too_few_samples():
    with pytest.raises(ValueError, match="at least 5"):
        wilcoxon_signed_rank([1.0, -2.0, 3.0, 4.0])


def test_wilcoxon_exact_matches_enumeration_oracle():
    rng = np.random.default_rng(0)
    for _ in range(60):
        n = int(rng.integers(5, 13))
        d = rng.standard_normal(n)
        if rng.random() < 0.4:  # force ties in |d|
            d[: n // 2] = np.sign(d[: n // 2]) * np.abs(d[0])
        res = wilcoxon_signed_rank(d)
        assert res.method == "exact"
        assert res.p == pytest.approx(_enumeration_oracle(d), abs=1e-12)


def test_wilcoxon_matches_scipy_exact_no_ties():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = rng.standard_normal(10)
        ours = wilcoxon_signed_rank(d).p
        theirs = scipy_stats.wilcoxon(d, mode="exact", alternative="two-sided").pvalue
        assert ours == pytest.approx(theirs, rel=1e-10)


def test_wilcoxon_approx_close_to_exact_at_boundary():
    rng = np.random.default_rng(1)
    rels = []
    for _ in range(100):
        d = rng.standard_normal(15)
        exact = wilcoxon_signed_rank(d, exact_max_n=15).p
        approx = wilcoxon_signed_rank(d, exact_max_n=5).p
        rels.append(abs(approx - exact) / exact)
    assert np.median(rels) < 0.05
    assert np.mean(rels) < 0.05


def test_wilcoxon_sign_flip_invariance():
    rng = np.random.default_rng(2)
    for n in (8, 30):
        d = rng.standard_normal(n)
        assert wilcoxon_signed_rank(d).p == pytest.approx(wilcoxon_signed_rank(-d).p)


def test_wilcoxon_drops_zeros():
    base = [1.0, -2.0, 3.0, 4.0, -5.0, 6.0]
    with_zeros = base + [0.0, 0.0]
    a = wilcoxon_signed_rank(base)
    b = wilcoxon_signed_rank(with_zeros)
    assert a.p == b.p and b.n == len(base)


# ---------------------------------------------------------------------------
# fdr


def test_fdr_hand_example():
    adj, reject = fdr_bh([0.01, 0.03, 0.04, 0.5], q=0.05)
    assert np.allclose(adj, [0.04, 0.05333333333333334, 0.05333333333333334, 0.5])
    assert reject.tolist() == [True, False, False, False]


def test_fdr_all_ones():
    adj, reject = fdr_bh([1.0, 1.0, 1.0])
    assert np.all(adj == 1.0) and not reject.any()


def test_fdr_single_p_unchanged():
    adj, _ = fdr_bh([0.2])
    assert adj.tolist() == [0.2]


def test_fdr_rejects_out_of_range():
    with pytest.raises(ValueError):
        fdr_bh([0.5, 1.5])


def _stepup_oracle(pvals):
    """Literal step-up formula, written independently."""
    m = len(pvals)
    order = sorted(range(m), key=lambda i: pvals[i])
    adjusted = [None] * m
    running = 1.0
    for rank in range(m, 0, -1):
        i = order[rank - 1]
        running = min(running, pvals[i] * m / rank)
        adjusted[i] = running
    return adjusted


def test_fdr_matches_stepup_oracle_on_random_vectors():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        m = int(rng.integers(1, 40))
        p = rng.uniform(0, 1, m)
        adj, _ = fdr_bh(p)
        want = _stepup_oracle(list(p))
        assert np.allclose(adj, want, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    p=st.lists(st.floats(min_value=0, max_value=1), min_size=2, max_size=20),
    idx=st.integers(0, 19),
    bump=st.floats(min_value=0.0, max_value=1.0),
)
def test_fdr_monotone_in_each_p(p, idx, bump):
    idx = idx % len(p)
    adj_before, _ = fdr_bh(p)
    raised = list(p)
    raised[idx] = min(1.0, raised[idx] + bump)
    adj_after, _ = fdr_bh(raised)
    assert np.all(adj_after >= adj_before - 1e-12)


# ---------------------------------------------------------------------------
# significance pipeline


def test_significance_table_rows():
    rng = np.random.default_rng(4)
    roi_scores = {"syntactic": rng.standard_normal((20, 3)) + 1.0}
    rows = significance_table(roi_scores, ("r1", "r2", "r3"), q=0.05)
    assert len(rows) == 3
    regions = [r[0] for r in rows]
    assert regions == ["r1", "r2", "r3"]
    for _, component, p_raw, p_adj, reject in rows:
        assert component == "syntactic"
        assert 0.0 <= p_raw <= p_adj <= 1.0
        assert reject  # strong shift away from zero
