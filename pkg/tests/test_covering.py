import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinlab.gridfn import Axis, GridFunction
from kinlab import covering as cov
from kinlab import geometry as geo


def _random_kinetic_family(rng, n):
    members = []
    for _ in range(n):
        z0 = geo.PhasePoint(rng.uniform(-0.5, 0), rng.uniform(-1, 1, 1),
                            rng.uniform(-1, 1, 1))
        members.append(geo.KineticCylinder(z0, rng.uniform(0.1, 0.6)))
    return cov.CylinderFamily(members)


def test_family_must_be_homogeneous():
    b = geo.EuclideanBall(np.zeros(1), 1.0)
    p = geo.ParabolicCylinder(0.0, np.zeros(1), 1.0)
    with pytest.raises(ValueError):
        cov.CylinderFamily([b, p])


def test_vitali_selected_are_disjoint():
    rng = np.random.default_rng(0)
    fam = _random_kinetic_family(rng, 40)
    sel = cov.vitali_select(fam)
    for i, a in enumerate(sel):
        for b in sel[:i]:
            assert not cov.regions_intersect(fam.members[a], fam.members[b])


def test_vitali_5q_covers_family():
    rng = np.random.default_rng(1)
    fam = _random_kinetic_family(rng, 30)
    sel = cov.vitali_select(fam)
    enlarged = [geo.dilate_5Q(fam.members[i]) for i in sel]
    mask = cov.RasterMask.for_box([(-1.0, 0.2), (-1.5, 1.5), (-1.7, 1.7)],
                                  "txv", cells_per_unit=24)
    union = np.zeros(mask.mask.shape, dtype=bool)
    for q in fam.members:
        union |= mask.rasterize(q)
    cover = np.zeros_like(union)
    for q in enlarged:
        cover |= mask.rasterize(q)
    uncovered = union & ~cover
    assert uncovered.sum() == 0


def test_vitali_empty_family():
    assert cov.vitali_select(cov.CylinderFamily([])) == []


def test_regions_intersect_symmetric_and_exact():
    rng = np.random.default_rng(2)
    mask = cov.RasterMask.for_box([(-1.0, 0.2), (-2.0, 2.0), (-2.0, 2.0)],
                                  "txv", cells_per_unit=32)
    for _ in range(25):
        fam = _random_kinetic_family(rng, 2)
        q1, q2 = fam.members
        pred = cov.regions_intersect(q1, q2)
        assert pred == cov.regions_intersect(q2, q1)
        overlap = (mask.rasterize(q1) & mask.rasterize(q2)).any()
        # raster overlap implies true overlap; the converse can fail only
        # within one cell of the boundary
        if overlap:
            assert pred


def test_maximal_indicator_average_is_one_at_anchor():
    # g = indicator of one lattice cylinder: the maximal function at the
    # anchor equals the average over exactly that cylinder, which is
    # |Q|/|Q| = 1 up to the raster count
    axes = [Axis("t", -1, 0, 32), Axis("x", -1, 1, 32), Axis("v", -1, 1, 32)]
    g = GridFunction(axes, np.ones((32, 32, 32)))
    Mg = cov.maximal_function(g)
    assert Mg.values.max() <= 1.0 + 1e-12
    assert Mg.values.max() == pytest.approx(1.0)


@given(st.integers(min_value=0, max_value=50))
@settings(max_examples=20, deadline=None)
def test_maximal_weak_1_1(seed):
    rng = np.random.default_rng(seed)
    axes = [Axis("t", -1, 0, 24), Axis("x", -1, 1, 24), Axis("v", -1, 1, 24)]
    g = GridFunction(axes, rng.random((24, 24, 24)) ** 4)
    Mg = cov.maximal_function(g)
    kappas = np.quantile(Mg.values, [0.5, 0.9, 0.99])
    c = cov.maximal_inequality_constant(g, Mg, kappas)
    assert c <= 2 * 5 ** 3


def test_interval_stacking_exact_oracle():
    # single interval (a-h, a], stack (a, a+mh): ratio m h / h = m >= m/(m+1)
    fam = cov.IntervalFamily([(0.0, 1.0)])
    rep = cov.interval_stack_ratio(fam, 2)
    assert rep.measure_stacked == pytest.approx(2.0)
    assert rep.measure_base == pytest.approx(1.0)
    assert rep.passed


def test_interval_stacking_worst_case_touches_bound():
    # nested intervals with matched tops force the stacked union toward the
    # m/(m+1) bound: (a - h, a] with h in {1, eps} at a = 0 vs a = m eps
    m = 1
    eps = 1e-4
    fam = cov.IntervalFamily([(0.0, 1.0), (m * eps + 0.0, eps)])
    rep = cov.interval_stack_ratio(fam, m)
    assert rep.ratio >= rep.bound


@given(st.integers(min_value=0, max_value=200), st.sampled_from([1, 2, 4]))
@settings(max_examples=60, deadline=None)
def test_interval_stacking_random_families(seed, m):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 10))
    fam = cov.IntervalFamily(list(zip(rng.uniform(-3, 3, k),
                                      rng.uniform(0.01, 1.0, k))))
    rep = cov.interval_stack_ratio(fam, m)
    assert rep.ratio >= rep.bound


def test_covering_constants():
    assert cov.crawling_constant(1, "kinetic") == pytest.approx(5 ** -2 * 2 ** -2)
    assert cov.crawling_constant(2, "kinetic") == pytest.approx(5 ** -3 * 2 ** -2)
    assert cov.crawling_constant(1, "elliptic") == pytest.approx(5 ** -1)
    assert cov.leak_constant(1, "parabolic") == pytest.approx(2.0)
    assert cov.leak_constant(1, "kinetic") == pytest.approx(12.0)


def test_stacked_union_ratio_single_cylinder():
    z0 = geo.PhasePoint(-0.1, np.zeros(1), np.zeros(1))
    fam = cov.CylinderFamily([geo.KineticCylinder(z0, 0.4)])
    rep = cov.stacked_union_ratio(fam, 1, cells_per_unit=48)
    assert rep.passed
    assert rep.ratio >= rep.bound - rep.slack


def test_ink_spots_parabolic_instance():
    rng = np.random.default_rng(3)
    E, F = cov.synthesize_ink_spots_instance("parabolic", 1, 1.0, rng,
                                             cells_per_unit=64)
    rep = cov.ink_spots_check(E, F, "parabolic", 1, 1.0, rng=rng)
    assert rep.hypothesis_ok
    assert rep.passed, (rep.measure_E, rep.rhs)


def test_ink_spots_rejects_e_not_in_f():
    axes = [Axis("t", -1, 0.5, 32), Axis("x", -2, 2, 32)]
    E = cov.RasterMask(axes, np.ones((32, 32), bool))
    F = cov.RasterMask(axes, np.zeros((32, 32), bool))
    with pytest.raises(ValueError):
        cov.ink_spots_check(E, F, "parabolic", 1, 1.0)


def test_lebesgue_probe_monotone_on_smooth_field():
    axes = [Axis("t", -1, 0, 24), Axis("x", -1, 1, 24), Axis("v", -1, 1, 24)]
    T, X, V = np.meshgrid(*[a.centers() for a in axes], indexing="ij")
    g = GridFunction(axes, np.sin(2 * T) + X ** 2 + 0.5 * V)
    rep = cov.lebesgue_differentiation_probe(g, samples=32,
                                             rng=np.random.default_rng(4))
    assert rep.monotone
    assert rep.median_deviation[-1] < rep.median_deviation[0]
