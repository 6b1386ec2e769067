"""Fused scoring, ranking order, tie handling, and variant ensembling."""

import numpy as np
import pytest

from photoseek import MockEncoder
from photoseek.corpus import Corpus, Dialogue, PhotoCandidate, Turn
from photoseek.descriptors import Descriptor, DescriptorVariant
from photoseek.errors import (
    DegenerateWeightsError,
    DimMismatchError,
    ShapeMismatchError,
    ValidationError,
)
from photoseek.scoring import (
    FusionConfig,
    Ranking,
    ScoreMatrix,
    cosine_similarity,
    ensemble,
    fuse,
    matrix_from_store,
    matrix_to_store,
    rank,
    score_all,
)
from photoseek.training import AdapterParams


def desc(did, text):
    return Descriptor(dialogue_id=did, variant=DescriptorVariant.DIALOGUE, text=text)


def small_corpus():
    photos = [
        PhotoCandidate("p0", "im0", ["dog", "ball"]),
        PhotoCandidate("p1", "im1", ["cat", "sofa"]),
        PhotoCandidate("p2", "im2", ["tree"]),
    ]
    dialogues = [
        Dialogue("d0", [Turn("A", "my dog with a ball")], "A", "p0"),
        Dialogue("d1", [Turn("A", "cat on the sofa")], "A", "p1"),
    ]
    return Corpus(photos=photos, dialogues=dialogues)


class TestCosine:
    def test_basic(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0
        assert cosine_similarity([1, 0], [1, 0]) == 1.0

    def test_clipped(self):
        v = np.array([1.0, 1e-8])
        assert cosine_similarity(v / np.linalg.norm(v), v / np.linalg.norm(v)) <= 1.0

    def test_shape_mismatch(self):
        with pytest.raises(DimMismatchError):
            cosine_similarity([1, 0], [1, 0, 0])


class TestFuse:
    def test_weighting(self):
        assert fuse(0.4, 0.5, FusionConfig(0.0)) == 0.4
        assert fuse(0.4, 0.5, FusionConfig(1.0)) == pytest.approx(0.9)
        assert fuse(0.4, 0.5, FusionConfig(1.2)) == pytest.approx(1.0)

    def test_arrays(self):
        scene = np.array([[0.1, 0.2]])
        vision = np.array([[0.3, 0.4]])
        out = fuse(scene, vision, FusionConfig(2.0))
        assert np.allclose(out, [[0.7, 1.0]])

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            FusionConfig(-0.1)


class TestScoreAll:
    def test_shapes_and_ranges(self):
        corpus = small_corpus()
        descriptors = [desc("d0", "my dog with a ball"), desc("d1", "cat on the sofa")]
        matrix = score_all(descriptors, corpus, MockEncoder(dim=16))
        assert matrix.scene.shape == (2, 3)
        assert matrix.vision.shape == (2, 3)
        assert matrix.dialogue_ids == ["d0", "d1"]
        assert matrix.photo_ids == ["p0", "p1", "p2"]
        assert np.all(matrix.scene <= 1.0) and np.all(matrix.scene >= -1.0)

    def test_rows_follow_corpus_order_not_descriptor_order(self):
        corpus = small_corpus()
        descriptors = [desc("d1", "cat on the sofa"), desc("d0", "my dog with a ball")]
        matrix = score_all(descriptors, corpus, MockEncoder(dim=16))
        assert matrix.dialogue_ids == ["d0", "d1"]

    def test_missing_descriptor(self):
        corpus = small_corpus()
        with pytest.raises(ValidationError, match="no descriptor for dialogue 'd1'"):
            score_all([desc("d0", "x")], corpus, MockEncoder(dim=16))

    def test_identity_adapters_change_nothing(self):
        corpus = small_corpus()
        descriptors = [desc("d0", "my dog"), desc("d1", "cat")]
        encoder = MockEncoder(dim=16)
        bare = score_all(descriptors, corpus, encoder)
        eye = score_all(descriptors, corpus, encoder, AdapterParams.identity(16))
        assert np.array_equal(bare.scene, eye.scene)
        assert np.array_equal(bare.vision, eye.vision)

    def test_adapter_dim_mismatch(self):
        corpus = small_corpus()
        descriptors = [desc("d0", "a"), desc("d1", "b")]
        with pytest.raises(DimMismatchError):
            score_all(descriptors, corpus, MockEncoder(dim=16), AdapterParams.identity(8))

    def test_adapters_renormalize(self):
        # scaling an adapter must not change cosines: outputs are renormalized
        corpus = small_corpus()
        descriptors = [desc("d0", "a"), desc("d1", "b")]
        encoder = MockEncoder(dim=16)
        params = AdapterParams.identity(16)
        scaled = AdapterParams(
            A_desc=3.0 * params.A_desc,
            A_obj=0.25 * params.A_obj,
            A_img=7.0 * params.A_img,
            log_tau=params.log_tau,
        )
        bare = score_all(descriptors, corpus, encoder)
        out = score_all(descriptors, corpus, encoder, scaled)
        assert np.allclose(out.scene, bare.scene, atol=1e-12)
        assert np.allclose(out.vision, bare.vision, atol=1e-12)


class TestRank:
    def matrix(self, scene, vision=None):
        scene = np.asarray(scene, dtype=np.float64)
        if vision is None:
            vision = np.zeros_like(scene)
        ids = [f"d{i}" for i in range(scene.shape[0])]
        photos = [f"p{j}" for j in range(scene.shape[1])]
        return ScoreMatrix(ids, photos, scene, np.asarray(vision, dtype=np.float64))

    def test_orders_by_fused_descending(self):
        matrix = self.matrix([[0.1, 0.9, 0.5]])
        ranking = rank(matrix)[0]
        assert ranking.photo_ids == ["p1", "p2", "p0"]
        assert ranking.scores == sorted(ranking.scores, reverse=True)

    def test_ties_break_by_photo_index(self):
        matrix = self.matrix([[0.5, 0.7, 0.5, 0.7]])
        ranking = rank(matrix)[0]
        assert ranking.photo_ids == ["p1", "p3", "p0", "p2"]

    def test_lambda_changes_order(self):
        matrix = self.matrix([[0.9, 0.1]], vision=[[0.0, 1.0]])
        assert rank(matrix, FusionConfig(0.0))[0].photo_ids == ["p0", "p1"]
        assert rank(matrix, FusionConfig(1.0))[0].photo_ids == ["p1", "p0"]

    def test_scores_match_fused_values(self):
        matrix = self.matrix([[0.2, 0.4]], vision=[[0.5, 0.1]])
        ranking = rank(matrix, FusionConfig(2.0))[0]
        assert ranking.photo_ids == ["p0", "p1"]
        assert ranking.scores == [pytest.approx(1.2), pytest.approx(0.6)]


class TestEnsemble:
    def matrices(self, seed=0, n=4, m=6, count=3):
        rng = np.random.default_rng(seed)
        ids = [f"d{i}" for i in range(n)]
        photos = [f"p{j}" for j in range(m)]
        return [
            ScoreMatrix(ids, photos, rng.uniform(-1, 1, (n, m)), rng.uniform(-1, 1, (n, m)))
            for _ in range(count)
        ]

    def test_copies_reproduce_single_ranking(self):
        mats = self.matrices()
        single = rank(mats[0])
        for weights in ([1, 1, 1], [5, 5, 5], [0.2, 0.2, 0.2]):
            combo = ensemble([mats[0]] * 3, weights=weights)
            assert [r.photo_ids for r in combo] == [r.photo_ids for r in single]

    def test_zero_weight_members_ignored(self):
        mats = self.matrices()
        heavy = ensemble(mats, weights=[1.0, 0.0, 0.0])
        single = rank(mats[0])
        assert [r.photo_ids for r in heavy] == [r.photo_ids for r in single]

    def test_rank_method(self):
        mats = self.matrices()
        combo = ensemble(mats, method="rank")
        assert len(combo) == 4
        # rank scores are means of negated positions: bounded by the pool size
        for ranking in combo:
            assert all(-6 <= s <= -1 for s in ranking.scores)

    def test_sigma_zero_rows_become_zeros(self):
        ids, photos = ["d0"], ["p0", "p1"]
        flat = ScoreMatrix(ids, photos, np.full((1, 2), 0.3), np.zeros((1, 2)))
        varied = ScoreMatrix(ids, photos, np.array([[0.9, 0.1]]), np.zeros((1, 2)))
        combo = ensemble([flat, varied])
        # the flat matrix contributes nothing; order follows the varied one
        assert combo[0].photo_ids == ["p0", "p1"]

    def test_index_set_mismatch(self):
        mats = self.matrices()
        other = ScoreMatrix(["dX"], mats[0].photo_ids, np.zeros((1, 6)), np.zeros((1, 6)))
        with pytest.raises(ShapeMismatchError):
            ensemble([mats[0], other])

    def test_weight_arity_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ensemble(self.matrices(), weights=[1.0, 2.0])

    def test_degenerate_weights(self):
        with pytest.raises(DegenerateWeightsError):
            ensemble(self.matrices(), weights=[1.0, -0.5, 1.0])
        with pytest.raises(DegenerateWeightsError):
            ensemble(self.matrices(), weights=[0.0, 0.0, 0.0])

    def test_empty_input(self):
        with pytest.raises(ShapeMismatchError):
            ensemble([])

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            ensemble(self.matrices(), method="borda")


class TestMatrixStore:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        ids = ["d0", "d1"]
        photos = ["p0", "p1", "p2"]
        matrix = ScoreMatrix(
            ids, photos,
            rng.uniform(-1, 1, (2, 3)).astype(np.float32).astype(np.float64),
            rng.uniform(-1, 1, (2, 3)).astype(np.float32).astype(np.float64),
        )
        store = matrix_to_store(matrix)
        again = matrix_from_store(store, ids, photos)
        assert np.allclose(again.scene, matrix.scene, atol=1e-7)
        assert np.allclose(again.vision, matrix.vision, atol=1e-7)
        assert again.dialogue_ids == ids and again.photo_ids == photos
