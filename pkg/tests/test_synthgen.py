import numpy as np
import pytest

from occam.backend import fit_centroid_head, classify
from occam.core import Embedding
from occam.metrics import EvalRecord, GroupedResults, accuracy, common_counter_gap
from occam.synthgen import SynthSpec, counter_split, generate, group_id


def spec(**kwargs):
    defaults = dict(n_samples=30, seed=3, height=48, width=48)
    defaults.update(kwargs)
    return SynthSpec(**defaults)


class TestDeterminism:
    def test_same_seed_is_bit_identical(self):
        a = generate(spec(correlation=0.5))
        b = generate(spec(correlation=0.5))
        for sa, sb in zip(a.samples, b.samples):
            assert sa.id == sb.id and sa.label == sb.label and sa.group == sb.group
            np.testing.assert_array_equal(sa.image.data, sb.image.data)
            np.testing.assert_array_equal(a.gt_segs[sa.id].labels, b.gt_segs[sb.id].labels)

    def test_different_seed_differs(self):
        a = generate(spec(seed=3))
        b = generate(spec(seed=4))
        assert any(
            not np.array_equal(sa.image.data, sb.image.data)
            for sa, sb in zip(a.samples, b.samples)
        )


class TestCorrelation:
    def test_rho_one_all_groups_matched(self):
        ds = generate(spec(correlation=1.0))
        assert all(s.group % 2 == 0 for s in ds.samples)

    def test_rho_zero_all_groups_mismatched(self):
        ds = generate(spec(correlation=0.0))
        assert all(s.group % 2 == 1 for s in ds.samples)

    def test_rho_half_binomial(self):
        n = 400
        ds = generate(spec(n_samples=n, correlation=0.5, seed=11))
        matched = sum(1 for s in ds.samples if s.group % 2 == 0)
        sigma = (n * 0.25) ** 0.5
        assert abs(matched - n / 2) <= 3 * sigma

    def test_group_encoding(self):
        assert group_id(2, True) == 4
        assert group_id(2, False) == 5


class TestSceneStructure:
    def test_foreground_pixels_carry_the_class_color(self):
        ds = generate(spec(correlation=0.5, seed=21))
        objects, _ = spec().palette()
        for s in ds.samples:
            fg = ds.gt_segs[s.id].labels == 1
            pixels = s.image.data[:, fg]
            expected = np.tile(np.array(objects[s.label])[:, None], pixels.shape[1])
            np.testing.assert_array_equal(pixels, expected)

    def test_background_color_matches_group(self):
        ds = generate(spec(correlation=1.0, seed=5))
        _, backgrounds = spec().palette()
        for s in ds.samples:
            seg = ds.gt_segs[s.id].labels
            corner_color = tuple(s.image.data[:, 0, 0])  # border is always background
            assert corner_color == backgrounds[s.label]

    def test_distractors_never_touch_the_foreground(self):
        ds = generate(spec(n_samples=40, seed=13, distractors=(2, 3)))
        for s in ds.samples:
            seg = ds.gt_segs[s.id].labels
            fg = seg == 1
            distractors = seg >= 2
            assert not (fg & distractors).any()

    def test_bbox_is_tight(self):
        ds = generate(spec(seed=2))
        for s in ds.samples:
            fg = ds.gt_segs[s.id].labels == 1
            rows = np.flatnonzero(fg.any(axis=1))
            cols = np.flatnonzero(fg.any(axis=0))
            assert s.gt_bbox == (rows[0], cols[0], rows[-1] + 1, cols[-1] + 1)

    def test_first_gt_mask_is_the_foreground(self):
        ds = generate(spec(seed=2))
        for s in ds.samples:
            np.testing.assert_array_equal(s.gt_masks[0].bits, ds.gt_segs[s.id].labels == 1)


class TestSpecValidation:
    def test_image_too_small(self):
        with pytest.raises(ValueError, match="16x16"):
            SynthSpec(n_samples=1, height=8, width=32)

    def test_bad_correlation(self):
        with pytest.raises(ValueError, match="correlation"):
            SynthSpec(n_samples=1, correlation=1.5)

    def test_infeasible_shape_size(self):
        bad = spec(object_size_range=(1.2, 1.5))
        with pytest.raises(ValueError, match="does not fit"):
            generate(bad)

    def test_too_many_classes_for_derived_palette(self):
        with pytest.raises(ValueError, match="palettes"):
            SynthSpec(n_samples=1, n_classes=4)


def toy_features(sample):
    from occam.backend import toy_encoder
    from occam.core import full_mask
    from occam.maskops import FULL_IMAGE_INDEX, GrayBgCrop, apply_mask

    image = sample.image
    mode = GrayBgCrop(target_h=image.height, target_w=image.width)
    applied = apply_mask(image, full_mask(image.height, image.width), mode, FULL_IMAGE_INDEX)
    return toy_encoder(applied).values


class TestCounterSplit:
    def test_identical_class_balance(self):
        common, counter = counter_split(spec(n_samples=31))
        assert [s.label for s in common.samples] == [s.label for s in counter.samples]
        assert all(s.group % 2 == 0 for s in common.samples)
        assert all(s.group % 2 == 1 for s in counter.samples)

    def test_background_trained_classifier_collapses_on_counter(self):
        common, counter = counter_split(spec(n_samples=60, seed=17))
        features = np.stack([toy_features(s) for s in common.samples])
        labels = [s.label for s in common.samples]
        head = fit_centroid_head(features, labels, n_classes=3)

        def split_accuracy(ds):
            records = []
            for s in ds.samples:
                probs = classify(head, Embedding(toy_features(s)))
                records.append(
                    EvalRecord(s.id, int(np.argmax(probs.probs)), s.label, s.group)
                )
            return accuracy(GroupedResults(records=tuple(records)))

        acc_common = split_accuracy(common)
        acc_counter = split_accuracy(counter)
        assert acc_common >= 0.95
        assert acc_counter <= 0.4

    def test_class_blind_classifier_has_zero_gap(self):
        common, counter = counter_split(spec(n_samples=33, seed=23))

        def constant_results(ds):
            return GroupedResults(
                records=tuple(EvalRecord(s.id, 0, s.label, s.group) for s in ds.samples)
            )

        gap, _, _ = common_counter_gap(constant_results(common), constant_results(counter))
        assert gap == 0.0

    def test_foreground_distribution_identical_across_splits(self):
        common, counter = counter_split(spec(n_samples=60, seed=29))
        objects, _ = spec().palette()

        def per_class_fg_colors(ds):
            colors = {}
            for s in ds.samples:
                fg = ds.gt_segs[s.id].labels == 1
                colors.setdefault(s.label, set()).update(
                    map(tuple, s.image.data[:, fg].T.tolist())
                )
            return colors

        assert per_class_fg_colors(common) == per_class_fg_colors(counter)

    def test_mean_object_area_similar_across_splits(self):
        # Sizes are drawn from the same distribution in both splits.
        common, counter = counter_split(spec(n_samples=120, seed=31))

        def mean_area(ds):
            return np.mean([(ds.gt_segs[s.id].labels == 1).sum() for s in ds.samples])

        a, b = mean_area(common), mean_area(counter)
        assert abs(a - b) / max(a, b) < 0.15
