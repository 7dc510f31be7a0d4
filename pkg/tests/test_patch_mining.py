import numpy as np
import pytest
from scipy.ndimage import maximum_filter

from recurdet.errors import DegenerateBox, NoRecurrence
from recurdet.image_core import GrayImage
from recurdet.patch_mining import MiningConfig, mine_recurrent_patches, rescale_to_canonical

from conftest import MINING_VARIANCE_FLOOR


class TestRescale:
    def test_identity_when_bbox_matches_canonical(self):
        img = GrayImage(np.zeros((100, 100)))
        out, scale = rescale_to_canonical(img, (10, 10, 27, 27), MiningConfig())
        assert scale == 1.0
        assert out is img

    def test_half_scale(self):
        img = GrayImage(np.linspace(0, 1, 120 * 80).reshape(120, 80))
        out, scale = rescale_to_canonical(img, (5, 5, 54, 54), MiningConfig())
        assert scale == 0.5
        assert (out.height, out.width) == (60, 40)

    def test_rounding_rule(self):
        # 40 px box on a 400x300 image: factor 27/40, dims 270x203.
        img = GrayImage(np.zeros((300, 400)))
        out, scale = rescale_to_canonical(img, (50, 50, 40, 40), MiningConfig())
        assert scale == pytest.approx(0.675)
        assert (out.width, out.height) == (270, 203)

    def test_degenerate_box(self):
        img = GrayImage(np.zeros((50, 50)))
        with pytest.raises(DegenerateBox):
            rescale_to_canonical(img, (10, 10, 3, 20), MiningConfig())
        with pytest.raises(DegenerateBox):
            rescale_to_canonical(img, (40, 40, 20, 20), MiningConfig())

    def test_preserves_structure(self):
        rng = np.random.default_rng(0)
        img = GrayImage(rng.random((60, 60)))
        out, scale = rescale_to_canonical(img, (0, 0, 54, 54), MiningConfig())
        # Downscaled-by-2 pixels approximate the 2x2 block means.
        block = img.data[10:12, 20:22].mean()
        assert abs(out.data[5, 10] - block) < 0.3


class TestMining:
    def test_planted_scene_frequencies(self, clean_scene_25):
        img, truth = clean_scene_25
        patches = mine_recurrent_patches(img, MiningConfig(rng_seed=1, variance_floor=MINING_VARIANCE_FLOOR))
        assert len(patches) >= 3
        assert all(p.frequency == 25 for p in patches)

    def test_constant_image_no_recurrence(self):
        img = GrayImage(np.full((80, 80), 0.4))
        with pytest.raises(NoRecurrence):
            mine_recurrent_patches(img, MiningConfig(rng_seed=2, variance_floor=MINING_VARIANCE_FLOOR))

    def test_determinism(self, clean_scene_25):
        img, _ = clean_scene_25
        a = mine_recurrent_patches(img, MiningConfig(rng_seed=3, variance_floor=MINING_VARIANCE_FLOOR))
        b = mine_recurrent_patches(img, MiningConfig(rng_seed=3, variance_floor=MINING_VARIANCE_FLOOR))
        assert len(a) == len(b)
        for pa, pb in zip(a, b):
            assert pa.source == pb.source
            assert pa.frequency == pb.frequency
            assert np.array_equal(pa.patch.data, pb.patch.data)
            assert np.array_equal(pa.occurrence.data, pb.occurrence.data)

    def test_exclusion_soundness(self, clean_scene_25):
        img, _ = clean_scene_25
        patches = mine_recurrent_patches(img, MiningConfig(rng_seed=4, variance_floor=MINING_VARIANCE_FLOOR))
        side = 9
        h = side // 2
        claimed = np.zeros(img.data.shape, dtype=bool)
        for p in patches:
            r, c = p.source
            window = claimed[r - h : r + h + 1, c - h : c + h + 1]
            assert not window.any(), f"patch {p.id} window overlaps earlier occurrences"
            claimed |= p.occurrence.data

    def test_accepted_frequencies_respect_stop_rule(self, clean_scene_25):
        img, _ = clean_scene_25
        cfg = MiningConfig(rng_seed=5, variance_floor=MINING_VARIANCE_FLOOR)
        patches = mine_recurrent_patches(img, cfg)
        running_max = 0
        for p in patches:
            running_max = max(running_max, p.frequency)
            assert p.frequency >= cfg.stop_fraction * running_max

    def test_occurrence_counts_match_frequency(self, clean_scene_25):
        img, _ = clean_scene_25
        for p in mine_recurrent_patches(img, MiningConfig(rng_seed=6, variance_floor=MINING_VARIANCE_FLOOR)):
            assert p.occurrence.count == p.frequency
            assert p.frequency >= 1
