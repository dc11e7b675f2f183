"""Seed ranking: border perpendicularity and color diversity."""
from __future__ import annotations

import numpy as np
import pytest

from fresco.model import Board, Fragment, Pose, PuzzleDataset
from fresco.seeding import (
    SeedConfig,
    color_diversity_score,
    perpendicularity_score,
    rank_seeds,
)


def _fragment(img, fid=0):
    return Fragment(fid, img, np.ones(img.shape[:2], bool))


def _stripe_image():
    # Two contrasting stripes hugging perpendicular borders: the cleanest
    # possible case for the two-segments-at-right-angles detector.
    img = np.full((120, 120, 4), 225, np.uint8)
    img[:, :, 3] = 255
    img[0:4, :, :3] = (30, 45, 60)
    img[:, 0:4, :3] = (30, 45, 60)
    return img


def _uniform_image():
    img = np.full((120, 120, 4), 225, np.uint8)
    img[:, :, 3] = 255
    return img


def _noisy_image():
    rng = np.random.default_rng(0)
    img = np.empty((120, 120, 4), np.uint8)
    img[:, :, :3] = rng.integers(0, 256, (120, 120, 3), dtype=np.uint8)
    img[:, :, 3] = 255
    return img


def _toy_puzzle():
    frags = [_fragment(_stripe_image(), 0),
             _fragment(_uniform_image(), 1),
             _fragment(_noisy_image(), 2)]
    return PuzzleDataset(
        fragments=frags,
        board=Board(cols=9, rows=9, cell_size_px=30),
        rotations=(0.0, 90.0, 180.0, 270.0),
        ground_truth={0: Pose(2, 2, 0), 1: Pose(6, 2, 0), 2: Pose(4, 6, 0)},
    )


def test_perpendicular_border_stripes_score_one():
    assert perpendicularity_score(_fragment(_stripe_image()), SeedConfig()) == 1


def test_featureless_fragment_scores_zero():
    assert perpendicularity_score(_fragment(_uniform_image()), SeedConfig()) == 0


def test_uniform_color_occupies_exactly_one_bin():
    c = color_diversity_score(_fragment(_uniform_image()), SeedConfig())
    bins = SeedConfig().hist_bins
    assert c == pytest.approx(1 / (bins[0] * bins[1]), abs=1e-15)


def test_two_color_fragment_occupies_two_bins():
    c = color_diversity_score(_fragment(_stripe_image()), SeedConfig())
    bins = SeedConfig().hist_bins
    assert c == pytest.approx(2 / (bins[0] * bins[1]), abs=1e-15)


def test_noise_maximizes_diversity_without_structure():
    frag = _fragment(_noisy_image())
    assert perpendicularity_score(frag, SeedConfig()) == 0
    assert color_diversity_score(frag, SeedConfig()) > 0.5


def test_combined_score_is_convex_blend():
    ranking = rank_seeds(_toy_puzzle(), SeedConfig(alpha=0.7))
    by_id = {e.fragment_id: e for e in ranking.entries}
    for e in ranking.entries:
        assert e.s == pytest.approx(0.7 * e.p + 0.3 * e.c, abs=1e-12)
    assert by_id[0].p == 1 and by_id[1].p == 0 and by_id[2].p == 0


def test_alpha_one_ranks_by_structure_alone():
    ranking = rank_seeds(_toy_puzzle(), SeedConfig(alpha=1.0))
    assert ranking.entries[0].fragment_id == 0  # the striped fragment
    # the two P=0 fragments tie at S=0 and fall back to id order
    assert [e.fragment_id for e in ranking.entries[1:]] == [1, 2]


def test_alpha_zero_ranks_by_diversity_alone():
    ranking = rank_seeds(_toy_puzzle(), SeedConfig(alpha=0.0))
    assert ranking.entries[0].fragment_id == 2  # the noisy fragment
    assert ranking.entries[1].fragment_id == 0  # two bins beat one
    assert ranking.entries[2].fragment_id == 1


def test_ranking_is_sorted_and_flags_top_k(puzzle6):
    ranking = rank_seeds(puzzle6, SeedConfig(top_k=3))
    scores = [e.s for e in ranking.entries]
    assert scores == sorted(scores, reverse=True)
    assert len(ranking.entries) == len(puzzle6.fragments)
    assert [e.proposed for e in ranking.entries] == [True] * 3 + [False] * 3
    assert ranking.top_k == 3


def test_masked_out_pixels_do_not_contribute():
    # Same image, but the mask hides the stripes: the detector must not
    # see through the mask.
    img = _stripe_image()
    mask = np.ones((120, 120), bool)
    mask[:8, :] = False
    mask[:, :8] = False
    frag = Fragment(0, img, mask)
    assert perpendicularity_score(frag, SeedConfig()) == 0
    c = color_diversity_score(frag, SeedConfig())
    bins = SeedConfig().hist_bins
    assert c == pytest.approx(1 / (bins[0] * bins[1]), abs=1e-15)
