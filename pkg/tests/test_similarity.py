import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bubblekit.fields import GridSpec, ScalarGrid
from bubblekit.similarity import (
    VARIANCE_FLOOR,
    BoxFilter,
    EmptySampleError,
    GaussianSummary,
    bhattacharyya,
    build_bsf,
    build_distribution_field,
    default_template_box,
    fit_gaussian,
    fit_template,
    load_template,
    save_template,
)
from bubblekit.slic import SlicParams, slic_partition

UNIT = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))


def grid_from(values_3d, name="density"):
    values_3d = np.asarray(values_3d, dtype=np.float64)
    spec = GridSpec.from_bounds(UNIT, values_3d.shape)
    return ScalarGrid(spec, values_3d.transpose(2, 1, 0).ravel(), name)


def quad_bhattacharyya(g1: GaussianSummary, g2: GaussianSummary) -> float:
    """Independent oracle: -ln of the overlap integral of the two pdfs."""
    s1, s2 = math.sqrt(g1.var), math.sqrt(g2.var)

    def integrand(x):
        p1 = math.exp(-0.5 * ((x - g1.mean) / s1) ** 2) / (s1 * math.sqrt(2 * math.pi))
        p2 = math.exp(-0.5 * ((x - g2.mean) / s2) ** 2) / (s2 * math.sqrt(2 * math.pi))
        return math.sqrt(p1 * p2)

    lo = min(g1.mean - 40 * s1, g2.mean - 40 * s2)
    hi = max(g1.mean + 40 * s1, g2.mean + 40 * s2)
    bc, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400,
                           points=[g1.mean, g2.mean])
    return -math.log(bc)


# ---------------------------------------------------------------------------
# fit_gaussian / fit_template


def test_fit_gaussian_hand_values():
    g = fit_gaussian([1.0, 2.0, 3.0])
    assert g.mean == 2.0
    assert g.var == pytest.approx(2.0 / 3.0, abs=1e-15)
    assert g.n == 3


def test_fit_gaussian_floor_cases():
    assert fit_gaussian([5.0]).var == VARIANCE_FLOOR
    assert fit_gaussian([5.0]).mean == 5.0
    assert fit_gaussian([3.0] * 20).var == VARIANCE_FLOOR


def test_fit_gaussian_empty_raises():
    with pytest.raises(EmptySampleError):
        fit_gaussian([])


def test_fit_template_all_zero_box():
    density = grid_from(np.zeros((4, 4, 4)))
    t = fit_template(density, BoxFilter((0, 0, 0), (2, 2, 2)))
    assert t.gaussian.mean == 0.0
    assert t.gaussian.var == VARIANCE_FLOOR


def test_fit_template_full_grid():
    vol = np.arange(8.0).reshape(2, 2, 2)
    density = grid_from(vol)
    t = fit_template(density, BoxFilter((0, 0, 0), (2, 2, 2)))
    assert t.gaussian.mean == vol.mean()
    assert t.gaussian.var == pytest.approx(vol.var(), abs=1e-12)


def test_fit_template_half_and_half_box():
    vol = np.zeros((4, 2, 2))
    vol[2:, :, :] = 1.0
    # 2x2x2 box at x in {1, 2} holds values {0,0,0,0,1,1,1,1}
    density = grid_from(vol)
    t = fit_template(density, BoxFilter((1, 0, 0), (3, 2, 2)))
    assert t.gaussian.mean == 0.5
    assert t.gaussian.var == 0.25


def test_fit_template_rejects_out_of_grid_box():
    density = grid_from(np.zeros((4, 4, 4)))
    with pytest.raises(ValueError):
        fit_template(density, BoxFilter((0, 0, 0), (5, 2, 2)))


def test_template_json_roundtrip(tmp_path):
    density = grid_from(np.arange(64.0).reshape(4, 4, 4))
    t = fit_template(density, BoxFilter((1, 1, 1), (3, 3, 3)))
    save_template(t, tmp_path / "template.json", created_from="test")
    back = load_template(tmp_path / "template.json")
    assert back == t


# ---------------------------------------------------------------------------
# bhattacharyya


def test_identical_gaussians_zero():
    g = GaussianSummary(3.0, 2.0, 10)
    assert bhattacharyya(g, g) == 0.0


def test_hand_values():
    assert bhattacharyya(GaussianSummary(0, 1, 1), GaussianSummary(1, 1, 1)) == pytest.approx(0.125, abs=1e-15)
    expected = 0.5 * math.log(2.5 / 2.0)
    assert bhattacharyya(GaussianSummary(0, 1, 1), GaussianSummary(0, 4, 1)) == pytest.approx(expected, abs=1e-15)


def test_quadrature_spot_checks():
    pairs = [
        (GaussianSummary(0.0, 1.0, 1), GaussianSummary(2.5, 0.5, 1)),
        (GaussianSummary(-1.0, 3.0, 1), GaussianSummary(4.0, 1.5, 1)),
    ]
    for g1, g2 in pairs:
        assert bhattacharyya(g1, g2) == pytest.approx(quad_bhattacharyya(g1, g2), abs=1e-9)


@given(
    m1=st.floats(-5, 5), m2=st.floats(-5, 5),
    v1=st.floats(0.3, 4.0), v2=st.floats(0.3, 4.0),
)
@settings(max_examples=60, deadline=None)
def test_symmetry_and_nonnegativity(m1, m2, v1, v2):
    g1, g2 = GaussianSummary(m1, v1, 1), GaussianSummary(m2, v2, 1)
    d12, d21 = bhattacharyya(g1, g2), bhattacharyya(g2, g1)
    assert d12 == pytest.approx(d21, abs=1e-12)
    assert d12 >= 0.0


def test_identity_of_indiscernibles():
    rng = np.random.default_rng(5)
    for _ in range(20):
        g = GaussianSummary(float(rng.uniform(-4, 4)), float(rng.uniform(0.3, 5)), 1)
        assert abs(bhattacharyya(g, GaussianSummary(g.mean, g.var, 2))) < 1e-12


def test_monotone_in_mean_separation():
    base = GaussianSummary(0.0, 1.5, 1)
    dists = [bhattacharyya(base, GaussianSummary(mu, 2.5, 1)) for mu in np.linspace(0, 6, 25)]
    assert all(b > a for a, b in zip(dists, dists[1:]))


# ---------------------------------------------------------------------------
# distribution field / BSF


def two_region_field():
    """Left half zeros (void-like), right half dense; one cluster each."""
    vol = np.zeros((6, 3, 3))
    vol[3:, :, :] = 9.0
    field = grid_from(vol)
    labels = slic_partition(field, SlicParams(cluster_size=(3, 3, 3), value_scale=9.0))
    return field, labels


def test_cluster_matching_template_scores_zero():
    field, labels = two_region_field()
    template = fit_template(field, BoxFilter((0, 0, 0), (3, 3, 3)))
    dfield = build_distribution_field(field, labels, template)
    assert dfield.distances.min() == pytest.approx(0.0, abs=1e-12)
    assert np.isfinite(dfield.distances).all()
    assert (dfield.distances >= 0).all()


def test_void_cluster_closer_than_dense_cluster():
    field, labels = two_region_field()
    template = fit_template(field, BoxFilter((0, 0, 0), (3, 3, 3)))  # void-like box
    dfield = build_distribution_field(field, labels, template)
    lab3 = labels.labels.reshape((3, 3, 6)).transpose(2, 1, 0)
    void_cluster = lab3[0, 0, 0]
    dense_cluster = lab3[5, 0, 0]
    assert dfield.distances[void_cluster] < dfield.distances[dense_cluster]


def test_distribution_field_matches_scalar_op():
    rng = np.random.default_rng(11)
    vol = rng.poisson(7.0, (9, 6, 9)).astype(float)
    field = grid_from(vol)
    labels = slic_partition(field, SlicParams())
    template = fit_template(field, BoxFilter((0, 0, 0), (3, 3, 3)))
    dfield = build_distribution_field(field, labels, template)
    for cid in range(0, labels.n_clusters, 7):
        member_values = field.values[labels.labels == cid]
        g = fit_gaussian(member_values)
        assert dfield.per_cluster[cid].n == g.n
        assert dfield.per_cluster[cid].mean == pytest.approx(g.mean, abs=1e-12)
        assert dfield.per_cluster[cid].var == pytest.approx(g.var, abs=1e-12)
        assert dfield.distances[cid] == pytest.approx(
            bhattacharyya(g, template.gaussian), abs=1e-10
        )


def test_bsf_hand_normalization():
    field, labels = two_region_field()
    template = fit_template(field, BoxFilter((0, 0, 0), (3, 3, 3)))
    dfield = build_distribution_field(field, labels, template)
    dfield.distances = np.array([0.0, 1.0, 4.0][: labels.n_clusters], dtype=float)
    if labels.n_clusters == 2:
        dfield.distances = np.array([0.0, 4.0])
        bsf = build_bsf(dfield)
        per = sorted(set(bsf.values.tolist()))
        assert per == [0.0, 1.0]
    else:
        bsf = build_bsf(dfield)
        assert set(np.round(bsf.values, 10)) == {0.0, 0.75, 1.0}


def test_bsf_all_zero_distances_gives_ones():
    field, labels = two_region_field()
    template = fit_template(field, BoxFilter((0, 0, 0), (3, 3, 3)))
    dfield = build_distribution_field(field, labels, template)
    dfield.distances = np.zeros(labels.n_clusters)
    bsf = build_bsf(dfield)
    assert (bsf.values == 1.0).all()


def test_bsf_range_and_per_cluster_constancy():
    rng = np.random.default_rng(13)
    vol = rng.poisson(9.0, (12, 6, 12)).astype(float)
    vol[3:7, 2:5, 3:7] = 0.0
    field = grid_from(vol)
    labels = slic_partition(field, SlicParams())
    template = fit_template(field, BoxFilter((4, 3, 4), (6, 4, 6)))
    bsf = build_bsf(build_distribution_field(field, labels, template))
    assert bsf.values.min() >= 0.0 and bsf.values.max() <= 1.0
    for cid in range(labels.n_clusters):
        vals = bsf.values[labels.labels == cid]
        assert (vals == vals[0]).all()


def test_default_template_box_sits_in_freeboard():
    spec = GridSpec.from_bounds(((0.0, 2.0), (0.0, 0.25), (0.0, 2.0)), (64, 8, 64))
    box = default_template_box(spec)
    assert box.inside(spec.dims)
    assert box.lo[0] >= 60  # above the bed (bed top at x = 51.2 voxels)
