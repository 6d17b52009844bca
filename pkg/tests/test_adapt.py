import numpy as np
import pytest

from trot.adapt import barycentric_map, barycentric_project, coral_align, transform_samples
from trot.errors import DegenerateCouplingError, DimensionMismatchError, TrotError
from trot.hmm import assign_dataset_states, build_atlas
from trot.ot_core import Coupling

from .conftest import make_atlas, make_dataset


def coupling(values, a=None, b=None):
    values = np.asarray(values, dtype=float)
    a = values.sum(axis=1) if a is None else a
    b = values.sum(axis=0) if b is None else b
    return Coupling(values, a, b)


class TestBarycentricMap:
    def test_scaled_identity_recovers_targets(self):
        src = make_atlas([[5, 5], [6, 6]], [0, 0], [1, 2])
        tgt = make_atlas([[0, 0], [2, 2]], [0, 0], [1, 2])
        mapped = barycentric_map(coupling(0.5 * np.eye(2)), src, tgt)
        assert mapped.mapped_means.tolist() == [[0, 0], [2, 2]]
        assert mapped.keys == [(0, 1), (0, 2)]

    def test_uniform_gives_barycenter(self):
        src = make_atlas([[0, 0], [1, 1]], [0, 0], [1, 2])
        tgt = make_atlas([[0, 0], [2, 2]], [0, 0], [1, 2])
        mapped = barycentric_map(coupling(np.full((2, 2), 0.25)), src, tgt)
        assert mapped.mapped_means.tolist() == [[1, 1], [1, 1]]

    def test_weighted_average_row(self):
        out = barycentric_project(np.array([[0.25, 0.75]]), np.array([[0.0, 0.0], [4.0, 0.0]]))
        assert out.tolist() == [[3.0, 0.0]]

    def test_zero_row_raises(self):
        with pytest.raises(DegenerateCouplingError, match="degenerate coupling row"):
            barycentric_project(np.array([[0.0, 0.0], [0.5, 0.5]]), np.zeros((2, 2)))

    def test_rows_are_convex_combinations(self, rng):
        values = rng.uniform(0.01, 1.0, (3, 5))
        weights = values / values.sum(axis=1, keepdims=True)
        assert np.all(weights >= 0)
        assert np.allclose(weights.sum(axis=1), 1.0, atol=1e-9)
        locations = rng.normal(0, 1, (5, 4))
        out = barycentric_project(values, locations)
        assert np.allclose(out, weights @ locations)
        # inside the bounding box of the targets, as any convex combination is
        assert np.all(out <= locations.max(axis=0) + 1e-12)
        assert np.all(out >= locations.min(axis=0) - 1e-12)

    def test_matched_block_coupling_lands_on_targets(self, rng):
        # mass only on matching (class, order) pairs -> exact recovery
        src = make_atlas(rng.normal(0, 1, (4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        tgt = make_atlas(rng.normal(5, 1, (4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        mapped = barycentric_map(coupling(np.eye(4) / 4), src, tgt)
        assert np.allclose(mapped.mapped_means, tgt.means)
        assert np.allclose(mapped.displacement, tgt.means - src.means)


class TestTransformSamples:
    def _setup(self, rng):
        feats = np.concatenate([rng.normal(0, 0.1, (6, 2)), rng.normal(4, 0.1, (6, 2))])
        ds = make_dataset(feats, labels=[0] * 6 + [1] * 6)
        atlas = build_atlas(ds, 2)
        assignment = assign_dataset_states(ds, 2)
        return ds, atlas, assignment

    def test_zero_displacement_is_identity(self, rng):
        ds, atlas, assignment = self._setup(rng)
        mapped = barycentric_map(coupling(np.eye(4) / 4), atlas, atlas)
        out = transform_samples(ds, assignment, mapped)
        assert np.allclose(out.features, ds.features)

    def test_single_state_uniform_shift(self, rng):
        feats = rng.normal(0, 1, (5, 3))
        ds = make_dataset(feats, labels=[0] * 5)
        atlas = build_atlas(ds, 1)
        shifted = make_atlas(atlas.means + [1.0, 0.0, 0.0], [0], [1])
        mapped = barycentric_map(coupling(np.array([[1.0]])), atlas, shifted)
        out = transform_samples(ds, assign_dataset_states(ds, 1), mapped)
        assert np.allclose(out.features, feats + [1.0, 0.0, 0.0])

    def test_per_state_shift_oracle(self, rng):
        # brute-force oracle: group windows by assigned state and compare
        # group means before and after the transform
        ds, atlas, assignment = self._setup(rng)
        tgt = make_atlas(
            atlas.means + np.array([[1, 0], [2, 0], [0, 3], [0, 4]], dtype=float),
            atlas.classes,
            atlas.orders,
        )
        mapped = barycentric_map(coupling(np.eye(4) / 4), atlas, tgt)
        out = transform_samples(ds, assignment, mapped)
        classes, orders = assignment
        for i, (c, o) in enumerate(mapped.keys):
            members = (classes == c) & (orders == o)
            before = ds.features[members].mean(axis=0)
            after = out.features[members].mean(axis=0)
            assert np.allclose(after - before, mapped.displacement[i], atol=1e-12)

    def test_preserves_count_order_labels(self, rng):
        ds, atlas, assignment = self._setup(rng)
        mapped = barycentric_map(coupling(np.eye(4) / 4), atlas, atlas)
        out = transform_samples(ds, assignment, mapped)
        assert len(out) == len(ds)
        assert np.array_equal(out.window_index, ds.window_index)
        assert np.array_equal(out.labels, ds.labels)

    def test_unknown_state_raises(self, rng):
        ds, atlas, assignment = self._setup(rng)
        mapped = barycentric_map(coupling(np.eye(4) / 4), atlas, atlas)
        classes, orders = assignment
        with pytest.raises(TrotError, match="unknown state"):
            transform_samples(ds, (classes, orders + 7), mapped)


class TestCoral:
    def test_identical_distributions_near_identity(self, rng):
        x = rng.normal(0, 1, (200, 4))
        ds = make_dataset(x)
        out = coral_align(ds, ds)
        assert np.abs(out.features - x).mean() <= 1e-6

    def test_recolors_to_target_covariance(self, rng):
        src = make_dataset(rng.normal(0, [2.0, 1.0], (1000, 2)))
        tgt = make_dataset(rng.normal(0, [1.0, 2.0], (1000, 2)))
        out = coral_align(src, tgt)
        cov = np.cov(out.features, rowvar=False)
        tgt_cov = np.cov(tgt.features, rowvar=False)
        assert abs(cov[0, 0] - tgt_cov[0, 0]) / tgt_cov[0, 0] < 0.05
        assert abs(cov[1, 1] - tgt_cov[1, 1]) / tgt_cov[1, 1] < 0.05

    def test_constant_column_unchanged(self, rng):
        feats = rng.normal(0, 1, (50, 3))
        feats[:, 1] = 7.0
        src = make_dataset(feats)
        tgt_feats = rng.normal(0, 1, (50, 3))
        tgt_feats[:, 1] = -2.0
        out = coral_align(src, make_dataset(tgt_feats))
        assert np.allclose(out.features[:, 1], 7.0, atol=1e-9)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            coral_align(make_dataset(np.zeros((3, 2))), make_dataset(np.zeros((3, 3))))
