import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clustercontrast.clustering import (
    OUTLIER,
    DbscanParams,
    PseudoLabeling,
    canonical_relabel,
    cluster_purity,
    dbscan,
)
from clustercontrast.core import EmptyInput, l2_normalize, make_rng

from oracles import ref_dbscan


def blobs(rng, n, d, n_centers, spread):
    """Unit vectors scattered around a few random directions."""
    centers = l2_normalize(rng.standard_normal((n_centers, d)))
    pts = centers[rng.integers(0, n_centers, n)] + spread * rng.standard_normal((n, d))
    return l2_normalize(pts)


def test_identical_points_form_one_cluster():
    lab = dbscan(np.tile([1.0, 0.0], (10, 1)), DbscanParams(eps=0.1, min_pts=4))
    assert lab.k == 1 and not lab.outliers
    assert len(lab.members(0)) == 10


def test_antipodal_groups():
    rng = make_rng(3)
    a = l2_normalize(np.array([1.0, 0.0, 0.0]) + 0.01 * rng.standard_normal((10, 3)))
    feats = np.vstack([a, -a])
    params = DbscanParams(eps=0.05, min_pts=4)
    lab = dbscan(feats, params)
    assert lab.k == 2 and not lab.outliers
    assert list(lab.labels) == ref_dbscan(feats, params.eps, params.min_pts)
    np.testing.assert_array_equal(lab.labels, [0] * 10 + [1] * 10)


def test_distant_points_are_all_outliers():
    lab = dbscan(np.eye(3), DbscanParams(eps=0.5, min_pts=4))
    assert lab.k == 0 and lab.outliers == {0, 1, 2}


def test_empty_input():
    with pytest.raises(EmptyInput):
        dbscan(np.zeros((0, 4)))


def test_closed_ball_boundary():
    # two points at cosine distance exactly 0.5 (60 degrees apart)
    feats = np.array([[1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    d = 1 - feats[0] @ feats[1]
    assert dbscan(feats, DbscanParams(eps=d, min_pts=2)).k == 1
    assert dbscan(feats, DbscanParams(eps=d * (1 - 1e-12), min_pts=2)).k == 0


def test_border_point_goes_to_first_opened_cluster():
    # 2 and 4 are core points of separate clusters; 3 is a border point of both
    angles = np.array([0.0, 0.05, 0.1, 0.5, 0.9, 0.95, 1.0])
    feats = np.c_[np.cos(angles), np.sin(angles)]
    eps = 1 - np.cos(0.42)
    lab = dbscan(feats, DbscanParams(eps=eps, min_pts=4))
    assert lab.k == 2 and not lab.outliers
    assert list(lab.labels) == ref_dbscan(feats, eps, 4)
    assert list(lab.labels) == [0, 0, 0, 0, 1, 1, 1]
    # the same geometry listed in reverse claims the border for the other side
    rev = dbscan(feats[::-1], DbscanParams(eps=eps, min_pts=4))
    assert list(rev.labels) == [0, 0, 0, 0, 1, 1, 1]


def test_params_validation():
    with pytest.raises(ValueError):
        DbscanParams(eps=0.0)
    with pytest.raises(ValueError):
        DbscanParams(min_pts=0)


def test_pseudo_labeling_invariants():
    lab = PseudoLabeling([1, -1, 0, 1])
    assert lab.k == 2
    assert lab.assignments == {0: 1, 2: 0, 3: 1}
    assert lab.outliers == {1}
    np.testing.assert_array_equal(lab.sizes(), [1, 2])
    with pytest.raises(ValueError):
        PseudoLabeling([0, 2])  # cluster 1 empty
    with pytest.raises(ValueError):
        PseudoLabeling([0, -2])


def test_canonical_relabel():
    np.testing.assert_array_equal(canonical_relabel([5, -1, 2, 5, 2]), [0, -1, 1, 0, 1])


@pytest.mark.parametrize(
    "idents, expected", [([7, 7, 7], 1.0), ([1, 1, 2, 2], 0.5), ([1, 1, 1, 2], 0.75)]
)
def test_purity_examples(idents, expected):
    lab = PseudoLabeling([0] * len(idents))
    assert cluster_purity(lab, np.array(idents)) == [(0, expected)]


def test_purity_ignores_outliers():
    lab = PseudoLabeling([0, 0, -1, 1])
    assert cluster_purity(lab, np.array([3, 3, 9, 4])) == [(0, 1.0), (1, 1.0)]


@st.composite
def dbscan_instances(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = make_rng(seed)
    n = draw(st.integers(1, 60))
    d = draw(st.integers(2, 6))
    feats = blobs(rng, n, d, draw(st.integers(1, 5)), draw(st.sampled_from([0.05, 0.2, 0.5])))
    return feats, draw(st.floats(0.01, 0.6)), draw(st.integers(1, 6))


@settings(max_examples=100, deadline=None)
@given(dbscan_instances())
def test_matches_reference(inst):
    feats, eps, min_pts = inst
    lab = dbscan(feats, DbscanParams(eps, min_pts))
    assert list(lab.labels) == ref_dbscan(feats, eps, min_pts)


@settings(max_examples=60, deadline=None)
@given(dbscan_instances(), st.integers(0, 2**32 - 1))
def test_permutation_invariance(inst, seed):
    feats, eps, min_pts = inst
    params = DbscanParams(eps, min_pts)
    perm = make_rng(seed).permutation(len(feats))
    base = dbscan(feats, params)
    # instance ids travel with their rows, so labels permute along
    moved = dbscan(feats[perm], params, ids=perm)
    np.testing.assert_array_equal(moved.labels, base.labels[perm])


@settings(max_examples=60, deadline=None)
@given(dbscan_instances())
def test_density_reachability_witness(inst):
    feats, eps, min_pts = inst
    lab = dbscan(feats, DbscanParams(eps, min_pts))
    dist = 1 - feats @ feats.T
    core = (dist <= eps).sum(axis=1) >= min_pts
    for i, c in lab.assignments.items():
        same = lab.labels == c
        assert np.any(core & same & (dist[i] <= eps))
    # noise points have no core point within eps
    for i in lab.outliers:
        assert not core[i] and not np.any(core & (dist[i] <= eps))
