import numpy as np
import pytest

from . import fmm
from .errors import DomainError, GeometryError
from .fmm import (ConvolveJob, Particle, build_interaction_lists, build_tree, convolve,
                  convolve_with_stats, direct_sum)
from .greens import (ThreeLayerParams, make_dirichlet_scattered, make_free_space,
                     make_impedance_scattered, make_three_layer)


def relative_error(values, reference):
    return np.linalg.norm(values - reference) / np.linalg.norm(reference)


def random_job(spec, n_sources, n_targets, source_box, target_box, seed=0, **options):
    rng = np.random.default_rng(seed)
    (sx0, sx1), (sy0, sy1) = source_box
    (tx0, tx1), (ty0, ty1) = target_box
    sources = np.column_stack([rng.uniform(sx0, sx1, n_sources), rng.uniform(sy0, sy1, n_sources)])
    targets = np.column_stack([rng.uniform(tx0, tx1, n_targets), rng.uniform(ty0, ty1, n_targets)])
    charges = rng.normal(size=n_sources) + 1j * rng.normal(size=n_sources)
    return ConvolveJob(spec, sources, charges, targets, **options)


class TestTree:

    def test_every_point_in_one_leaf(self):
        rng = np.random.default_rng(1)
        points = rng.uniform(0.0, 1.0, size=(300, 2))
        tree = build_tree(points, max_leaf=10)
        owned = np.sort(np.concatenate([leaf.sources for leaf in tree.leaves]))
        np.testing.assert_array_equal(owned, np.arange(300))
        assert all(max(leaf.sources.size, leaf.targets.size) <= 10 for leaf in tree.leaves)
        assert tree.depth >= 2

    def test_coincident_points_stay_in_one_leaf(self):
        points = np.tile([0.5, 0.5], (20, 1))
        tree = build_tree(points, max_leaf=4)
        assert len(tree.leaves) == 1

    def test_rejects_bad_leaf_size(self):
        with pytest.raises(DomainError):
            build_tree(np.zeros((3, 2)), max_leaf=0)

    def test_image_kernel_promotes_self_interaction(self):
        """Far above a Dirichlet wall the whole cluster interacts through M2L with itself."""
        rng = np.random.default_rng(2)
        points = np.column_stack([rng.uniform(0.0, 1.0, 50), rng.uniform(3.0, 4.0, 50)])
        tree = build_tree(points, max_leaf=10)
        build_interaction_lists(tree, make_dirichlet_scattered(1.0))
        assert any(promoted for box in tree.boxes for _, promoted in box.interaction)
        assert not any(box.near for box in tree.boxes)


class TestConvolveJob:

    def test_validation(self):
        spec = make_free_space(1.0)
        with pytest.raises(DomainError):
            ConvolveJob(spec, np.zeros((3, 2)), np.ones(2), np.ones((1, 2)))
        with pytest.raises(DomainError):
            ConvolveJob(spec, np.zeros((0, 2)), np.ones(0), np.ones((1, 2)))
        with pytest.raises(DomainError):
            ConvolveJob(spec, np.zeros((1, 2)), np.ones(1), np.ones((1, 2)), tol=0.0)
        with pytest.raises(DomainError):
            ConvolveJob(spec, np.zeros((1, 2)), np.ones(1), np.ones((1, 2)), threads=0)

    def test_from_particles(self):
        particles = [Particle((0.0, 1.0), 1.0), Particle((1.0, 2.0), 2j)]
        job = ConvolveJob.from_particles(make_free_space(1.0), particles, [(3.0, 3.0)], tol=1e-4)
        assert job.source_points.shape == (2, 2)
        np.testing.assert_array_equal(job.charges, [1.0, 2j])
        assert job.tol == 1e-4

    def test_points_outside_layer(self):
        job = ConvolveJob(make_dirichlet_scattered(1.0), [(0.0, -1.0)], [1.0], [(0.0, 1.0)])
        with pytest.raises(GeometryError):
            convolve(job)

    def test_direct_sum_guard(self, monkeypatch):
        monkeypatch.setattr(fmm, "DIRECT_SUM_LIMIT", 10)
        job = random_job(make_free_space(1.0), 5, 5, ((0, 1), (0, 1)), ((2, 3), (2, 3)))
        with pytest.raises(DomainError):
            direct_sum(job)


def test_free_space_matches_direct_sum():
    job = random_job(make_free_space(2.0), 300, 200, ((0, 2), (0, 2)), ((0, 2), (0, 2)),
                     tol=1e-6, max_leaf=15)
    values, stats = convolve_with_stats(job)
    assert relative_error(values, direct_sum(job)) < 1e-6
    assert stats.m2l > 0 and stats.s2t_pairs > 0
    assert stats.boxes >= stats.leaves > 1


def test_fixed_order_is_used():
    job = random_job(make_free_space(1.0), 100, 80, ((0, 1), (0, 1)), ((0, 1), (0, 1)),
                     order=6, max_leaf=10)
    tree = build_tree(job.source_points, job.max_leaf, job.targets)
    build_interaction_lists(tree, job.spec)
    fmm.upward_pass(tree, job.spec, job.charges, job.tol, job.order)
    assert all(box.multipole.order == 6 for box in tree.boxes if box.multipole is not None)


def test_dirichlet_matches_direct_sum():
    job = random_job(make_dirichlet_scattered(1.0), 150, 120, ((0, 2), (0.05, 1.5)),
                     ((0, 2), (0.05, 1.5)), tol=1e-6, max_leaf=12)
    assert relative_error(convolve(job), direct_sum(job)) < 1e-6


def test_impedance_matches_direct_sum():
    """Layered M2L with cached Sommerfeld matrices."""
    job = random_job(make_impedance_scattered(1.0, 1.0), 40, 30, ((0, 1), (0.1, 1.0)),
                     ((0, 1), (0.1, 1.0)), tol=1e-4, max_leaf=6)
    values, stats = convolve_with_stats(job)
    assert relative_error(values, direct_sum(job)) < 1e-4
    assert stats.cache_misses > 0


def test_threads_do_not_change_result():
    spec = make_free_space(1.0)
    single = convolve(random_job(spec, 150, 100, ((0, 1), (0, 1)), ((0, 1), (0, 1)),
                                 max_leaf=10, threads=1))
    pooled = convolve(random_job(spec, 150, 100, ((0, 1), (0, 1)), ((0, 1), (0, 1)),
                                 max_leaf=10, threads=4))
    np.testing.assert_array_equal(single, pooled)


@pytest.mark.slow
def test_three_layer_matches_direct_sum():
    """Sources in the top layer, targets in a fast middle layer."""
    spec = make_three_layer(ThreeLayerParams(1.5, 1.0, 2.0, 1.0), "s2t")
    job = random_job(spec, 80, 60, ((0, 2), (0.1, 1.0)), ((0, 2), (-0.9, -0.1)),
                     tol=1e-5, max_leaf=10, threads=2)
    assert relative_error(convolve(job), direct_sum(job)) < 1e-5


@pytest.mark.slow
def test_free_space_large_run():
    job = random_job(make_free_space(5.0), 5000, 3000, ((0, 4), (0, 4)), ((0, 4), (0, 4)),
                     tol=1e-8, max_leaf=40, threads=4)
    values = convolve(job)
    sample = np.random.default_rng(9).choice(len(job.targets), 200, replace=False)
    reference = direct_sum(ConvolveJob(job.spec, job.source_points, job.charges,
                                       job.targets[sample], tol=1e-8))
    assert relative_error(values[sample], reference) < 1e-8


@pytest.mark.parametrize("spec, source_box, target_box", [
    (make_dirichlet_scattered(1.0), ((0, 2), (0.05, 1.5)), ((0, 2), (0.05, 1.5))),
    (make_impedance_scattered(1.0, 1.0), ((0, 1), (0.1, 1.0)), ((0, 1), (0.1, 1.0))),
], ids=["dirichlet", "impedance"])
def test_convolve_is_linear_in_the_charges(spec, source_box, target_box):
    job = random_job(spec, 60, 40, source_box, target_box, tol=1e-4, max_leaf=8)
    other = np.random.default_rng(3).normal(size=len(job.charges)) + 0j

    def run(charges):
        return convolve(ConvolveJob(spec, job.source_points, charges, job.targets,
                                    tol=job.tol, max_leaf=job.max_leaf))

    combined = run(job.charges + 2.0 * other)
    np.testing.assert_allclose(combined, run(job.charges) + 2.0 * run(other),
                               rtol=1e-12, atol=1e-12 * np.max(np.abs(combined)))


def work_count(spec, n, seed=0):
    """M2L translations plus near-field pairs of a uniform n-source, n-target run."""
    rng = np.random.default_rng(seed)
    sources = np.column_stack([rng.uniform(0.0, 2.0, n), rng.uniform(0.1, 1.0, n)])
    targets = np.column_stack([rng.uniform(0.0, 2.0, n), rng.uniform(0.1, 1.0, n)])
    tree = build_tree(sources, fmm.DEFAULT_MAX_LEAF, targets)
    build_interaction_lists(tree, spec)
    m2l = sum(len(box.interaction) for box in tree.boxes)
    near = sum(box.targets.size * sum(source.sources.size for source in box.near)
               for box in tree.leaves)
    return m2l + near


@pytest.mark.slow
def test_work_grows_linearly():
    """Least-squares exponent of the operation count over N = 1e3, 1e4, 1e5 (k * domain = 2)."""
    spec = make_impedance_scattered(1.0, 1.0)
    sizes = np.array([1000, 10000, 100000])
    work = np.array([work_count(spec, n) for n in sizes])
    exponent = np.polyfit(np.log(sizes), np.log(work), 1)[0]
    assert exponent <= 1.15


@pytest.mark.slow
@pytest.mark.parametrize("spec, source_box, target_box", [
    (make_free_space(1.0), ((0, 2), (0, 2)), ((0, 2), (0, 2))),
    (make_dirichlet_scattered(1.0), ((0, 2), (0.05, 1.5)), ((0, 2), (0.05, 1.5))),
    (make_impedance_scattered(1.0, 1.0), ((0, 2), (0.1, 1.0)), ((0, 2), (0.1, 1.0))),
    (make_three_layer(ThreeLayerParams(1.5, 1.0, 2.0, 1.0), "s2t"), ((0, 2), (0.1, 1.0)),
     ((0, 2), (-0.9, -0.1))),
], ids=["free", "dirichlet", "impedance", "three-layer"])
def test_two_thousand_particles_match_direct_sum(spec, source_box, target_box):
    """N = 2000 sources and targets at tol 1e-6, checked on a random sample of targets."""
    job = random_job(spec, 2000, 2000, source_box, target_box, tol=1e-6, threads=4)
    values = convolve(job)
    sample = np.random.default_rng(11).choice(len(job.targets), 300, replace=False)
    reference = direct_sum(ConvolveJob(spec, job.source_points, job.charges,
                                       job.targets[sample], tol=job.tol))
    assert relative_error(values[sample], reference) <= 1e-6
