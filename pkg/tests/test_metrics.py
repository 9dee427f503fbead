import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avafford.errors import EmptyListError, LengthMismatchError, ShapeMismatchError
from avafford.metrics import MetricReport, binarize, evaluate_split, f_score, iou, mean_f_score, miou


def bruteforce_iou(p, q):
    inter = union = 0
    for a, b in zip(np.asarray(p).flatten(), np.asarray(q).flatten()):
        a, b = bool(a), bool(b)
        inter += a and b
        union += a or b
    return inter / union if union else 1.0


def bruteforce_f(p, q, beta2=0.3):
    inter = np_ = nq = 0
    for a, b in zip(np.asarray(p).flatten(), np.asarray(q).flatten()):
        a, b = bool(a), bool(b)
        inter += a and b
        np_ += a
        nq += b
    if np_ == 0 and nq == 0:
        return 1.0
    if np_ == 0 or nq == 0 or inter == 0:
        return 0.0
    prec, rec = inter / np_, inter / nq
    return (1 + beta2) * prec * rec / (beta2 * prec + rec)


class TestBinarize:
    def test_tie_goes_to_foreground(self):
        out = binarize(np.full((3, 3), 0.5), threshold=0.5)
        assert (out == 1).all()

    def test_all_zero(self):
        assert (binarize(np.zeros((3, 3))) == 0).all()

    def test_matches_elementwise_comparison(self):
        rng = np.random.default_rng(0)
        prob = rng.uniform(size=(8, 8))
        np.testing.assert_array_equal(binarize(prob, 0.3), (prob >= 0.3).astype(np.uint8))


class TestIou:
    def test_identical_nonempty(self):
        m = np.eye(4, dtype=np.uint8)
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        p = np.array([[1, 0], [0, 0]])
        q = np.array([[0, 1], [0, 0]])
        assert iou(p, q) == 0.0

    def test_hand_case(self):
        p = np.array([[1, 1], [0, 0]])
        q = np.array([[1, 0], [0, 0]])
        assert iou(p, q) == 0.5

    def test_both_empty_is_one(self):
        z = np.zeros((3, 3))
        assert iou(z, z) == 1.0

    def test_one_empty_is_zero(self):
        z = np.zeros((3, 3))
        o = np.ones((3, 3))
        assert iou(z, o) == 0.0 and iou(o, z) == 0.0

    def test_symmetry_and_shape_check(self):
        rng = np.random.default_rng(1)
        p = rng.integers(0, 2, (6, 6))
        q = rng.integers(0, 2, (6, 6))
        assert iou(p, q) == iou(q, p)
        with pytest.raises(ShapeMismatchError):
            iou(np.zeros((2, 2)), np.zeros((3, 3)))


class TestMiou:
    def test_single_pair(self):
        p = np.array([[1, 1], [0, 0]])
        q = np.array([[1, 0], [0, 0]])
        assert miou([(p, q)]) == iou(p, q)

    def test_mean_of_one_and_zero(self):
        a = np.ones((2, 2))
        b = np.zeros((2, 2))
        b2 = np.ones((2, 2))
        assert miou([(a, a), (np.array([[1, 0], [0, 0]]), np.array([[0, 1], [0, 0]]))]) == 0.5

    def test_empty_list_raises(self):
        with pytest.raises(EmptyListError):
            miou([])

    def test_matches_bruteforce_on_random_pairs(self):
        rng = np.random.default_rng(2)
        pairs = [(rng.integers(0, 2, (8, 8)), rng.integers(0, 2, (8, 8))) for _ in range(50)]
        expected = float(np.mean([bruteforce_iou(p, q) for p, q in pairs]))
        assert abs(miou(pairs) - expected) <= 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        pairs = [(rng.integers(0, 2, (4, 4)), rng.integers(0, 2, (4, 4))) for _ in range(9)]
        shuffled = [pairs[i] for i in rng.permutation(9)]
        assert abs(miou(pairs) - miou(shuffled)) < 1e-15


class TestFScore:
    def test_identical_nonempty(self):
        m = np.eye(4)
        assert f_score(m, m) == 1.0

    def test_disjoint(self):
        assert f_score(np.array([[1, 0]]), np.array([[0, 1]])) == 0.0

    def test_hand_case_half_precision_full_recall(self):
        # |P| = 2, |Q| = 1, P covers Q: prec 0.5, rec 1.0
        p = np.array([[1, 1], [0, 0]])
        q = np.array([[1, 0], [0, 0]])
        expected = 1.3 * 0.5 * 1.0 / (0.3 * 0.5 + 1.0)
        assert abs(f_score(p, q) - expected) < 1e-12
        assert abs(expected - 0.5652) < 1e-4

    def test_asymmetric(self):
        p = np.array([[1, 1], [0, 0]])
        q = np.array([[1, 0], [0, 0]])
        assert f_score(p, q) != f_score(q, p)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            p = rng.integers(0, 2, (8, 8))
            q = rng.integers(0, 2, (8, 8))
            assert abs(f_score(p, q) - bruteforce_f(p, q)) <= 1e-12

    @given(
        p=arrays(np.uint8, (6, 6), elements=st.integers(0, 1)),
        q=arrays(np.uint8, (6, 6), elements=st.integers(0, 1)),
    )
    @settings(max_examples=60, deadline=None)
    def test_bounded_unit_interval(self, p, q):
        assert 0.0 <= iou(p, q) <= 1.0
        assert 0.0 <= f_score(p, q) <= 1.0

    def test_spatial_permutation_invariance(self):
        rng = np.random.default_rng(5)
        p = rng.integers(0, 2, (5, 5))
        q = rng.integers(0, 2, (5, 5))
        perm = rng.permutation(25)
        pp = p.flatten()[perm].reshape(5, 5)
        qp = q.flatten()[perm].reshape(5, 5)
        assert iou(p, q) == iou(pp, qp)
        assert f_score(p, q) == f_score(pp, qp)


class TestEvaluateSplit:
    def random_case(self, n=20, seed=6):
        rng = np.random.default_rng(seed)
        preds, gts, cats = [], [], []
        for i in range(n):
            preds.append((rng.integers(0, 2, (16, 16)), rng.integers(0, 2, (16, 16))))
            gts.append((rng.integers(0, 2, (16, 16)), rng.integers(0, 2, (16, 16))))
            cats.append(f"c@{i % 3}")
        return preds, gts, cats

    def test_perfect_predictions(self):
        rng = np.random.default_rng(7)
        gts = [(rng.integers(0, 2, (8, 8)), rng.integers(0, 2, (8, 8))) for _ in range(5)]
        report = evaluate_split(gts, gts, ["a@b"] * 5)
        assert report.miou_f == report.f_f == report.miou_d == report.f_d == 1.0
        assert report.n_samples == 5

    def test_empty_split_raises(self):
        with pytest.raises(EmptyListError):
            evaluate_split([], [], [])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            evaluate_split([0], [], [])

    def test_matches_per_pixel_scorer(self):
        preds, gts, cats = self.random_case()
        report = evaluate_split(preds, gts, cats)
        exp_miou_f = np.mean([bruteforce_iou(p[0], g[0]) for p, g in zip(preds, gts)])
        exp_f_f = np.mean([bruteforce_f(p[0], g[0]) for p, g in zip(preds, gts)])
        exp_miou_d = np.mean([bruteforce_iou(p[1], g[1]) for p, g in zip(preds, gts)])
        exp_f_d = np.mean([bruteforce_f(p[1], g[1]) for p, g in zip(preds, gts)])
        assert abs(report.miou_f - exp_miou_f) <= 1e-12
        assert abs(report.f_f - exp_f_f) <= 1e-12
        assert abs(report.miou_d - exp_miou_d) <= 1e-12
        assert abs(report.f_d - exp_f_d) <= 1e-12

    def test_category_means_aggregate_to_global(self):
        preds, gts, cats = self.random_case(n=18, seed=8)
        report = evaluate_split(preds, gts, cats)
        for key in ("miou_f", "f_f", "miou_d", "f_d"):
            weighted = sum(row[key] * row["n_samples"] for row in report.per_category.values())
            assert abs(weighted / report.n_samples - getattr(report, key)) < 1e-12

    def test_probability_maps_are_binarized(self):
        gt = np.zeros((4, 4), dtype=np.uint8)
        gt[:2] = 1
        prob = np.where(gt, 0.9, 0.1)
        report = evaluate_split([(prob, prob)], [(gt, gt)], ["a@b"])
        assert report.miou_f == 1.0

    def test_json_and_table_render(self):
        preds, gts, cats = self.random_case(n=6, seed=9)
        report = evaluate_split(preds, gts, cats)
        parsed = __import__("json").loads(report.to_json())
        assert set(parsed) == {"miou_f", "f_f", "miou_d", "f_d", "per_category", "n_samples"}
        table = report.format_table()
        assert "overall" in table and "mIoU_f" in table
