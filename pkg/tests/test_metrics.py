import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgseg.metrics import MetricsReport, asd, dsc, evaluate_case, surface_voxels

SIX_NEIGHBORS = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]


def surface_oracle(mask):
    out = []
    H, W, T = mask.shape
    for h in range(H):
        for w in range(W):
            for t in range(T):
                if not mask[h, w, t]:
                    continue
                for dh, dw, dt in SIX_NEIGHBORS:
                    nh, nw, nt = h + dh, w + dw, t + dt
                    inside = 0 <= nh < H and 0 <= nw < W and 0 <= nt < T
                    if not inside or not mask[nh, nw, nt]:
                        out.append((h, w, t))
                        break
    return sorted(out)


def asd_oracle(pred, gt, class_id, spacing):
    """O(n^2) all-pairs nearest-surface-distance oracle."""
    surf_a = surface_oracle(pred == class_id)
    surf_b = surface_oracle(gt == class_id)
    if not surf_a or not surf_b:
        return None
    sx, sy, sz = spacing

    def nearest(p, points):
        best = math.inf
        for q in points:
            dx = (p[0] - q[0]) * sx
            dy = (p[1] - q[1]) * sy
            dz = (p[2] - q[2]) * sz
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if d < best:
                best = d
        return best

    d_ab = np.mean([nearest(p, surf_b) for p in surf_a])
    d_ba = np.mean([nearest(q, surf_a) for q in surf_b])
    return 0.5 * (d_ab + d_ba)


class TestDsc:
    def test_identical_nonempty(self):
        mask = np.zeros((4, 4, 4), dtype=np.uint8)
        mask[1:3, 1:3, 1:3] = 1
        assert dsc(mask, mask, 1) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4, 4), dtype=np.uint8)
        b = np.zeros((4, 4, 4), dtype=np.uint8)
        a[0, 0, 0] = 1
        b[3, 3, 3] = 1
        assert dsc(a, b, 1) == 0.0

    def test_half_overlap(self):
        a = np.zeros((4, 4, 4), dtype=np.uint8)
        b = np.zeros((4, 4, 4), dtype=np.uint8)
        a[0, 0, 0] = a[0, 0, 1] = 1
        b[0, 0, 1] = b[0, 0, 2] = 1
        assert dsc(a, b, 1) == 0.5

    def test_both_empty_is_one(self):
        empty = np.zeros((3, 3, 3), dtype=np.uint8)
        assert dsc(empty, empty, 1) == 1.0

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.integers(0, 3, size=(5, 5, 4)).astype(np.uint8)
            b = rng.integers(0, 3, size=(5, 5, 4)).astype(np.uint8)
            for c in (1, 2):
                assert dsc(a, b, c) == dsc(b, a, c)
                assert 0.0 <= dsc(a, b, c) <= 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            dsc(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)), 1)


class TestSurfaceVoxels:
    def test_single_voxel(self):
        mask = np.zeros((3, 3, 3), dtype=bool)
        mask[1, 1, 1] = True
        assert surface_voxels(mask).tolist() == [[1, 1, 1]]

    def test_solid_cube_sheds_center(self):
        mask = np.zeros((5, 5, 5), dtype=bool)
        mask[1:4, 1:4, 1:4] = True
        surf = surface_voxels(mask)
        assert len(surf) == 26
        assert [2, 2, 2] not in surf.tolist()

    def test_empty(self):
        assert surface_voxels(np.zeros((3, 3, 3), dtype=bool)).size == 0

    def test_volume_border_counts_as_outside(self):
        mask = np.ones((3, 3, 3), dtype=bool)
        surf = surface_voxels(mask)
        assert len(surf) == 26  # everything but the center

    def test_random_masks_match_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            mask = rng.random((5, 4, 6)) < 0.4
            got = sorted(map(tuple, surface_voxels(mask)))
            assert got == surface_oracle(mask)


class TestAsd:
    def test_identical_masks_zero(self):
        mask = np.zeros((5, 5, 5), dtype=np.uint8)
        mask[1:4, 1:4, 1:4] = 1
        assert asd(mask, mask, 1) == 0.0

    def test_two_points_three_apart(self):
        a = np.zeros((8, 4, 4), dtype=np.uint8)
        b = np.zeros((8, 4, 4), dtype=np.uint8)
        a[1, 1, 1] = 1
        b[4, 1, 1] = 1
        assert asd(a, b, 1, (1.0, 1.0, 1.0)) == 3.0

    def test_spacing_scales_distance(self):
        a = np.zeros((8, 4, 4), dtype=np.uint8)
        b = np.zeros((8, 4, 4), dtype=np.uint8)
        a[1, 1, 1] = 1
        b[4, 1, 1] = 1
        assert asd(a, b, 1, (2.0, 1.0, 1.0)) == 6.0

    def test_empty_surface_undefined(self):
        empty = np.zeros((4, 4, 4), dtype=np.uint8)
        full = np.zeros((4, 4, 4), dtype=np.uint8)
        full[1, 1, 1] = 1
        assert asd(empty, full, 1) is None
        assert asd(full, empty, 1) is None
        assert asd(empty, empty, 1) is None

    def test_matches_all_pairs_oracle_exactly(self):
        rng = np.random.default_rng(2)
        checked = 0
        while checked < 60:
            shape = tuple(rng.integers(2, 7, size=3))
            pred = (rng.random(shape) < 0.3).astype(np.uint8)
            gt = (rng.random(shape) < 0.3).astype(np.uint8)
            spacing = tuple(rng.choice([0.5, 1.0, 1.25], size=3))
            want = asd_oracle(pred, gt, 1, spacing)
            got = asd(pred, gt, 1, spacing)
            if want is None:
                assert got is None
                continue
            assert got == want  # bit-exact against the brute-force oracle
            checked += 1

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        a = np.zeros((10, 10, 8), dtype=np.uint8)
        b = np.zeros((10, 10, 8), dtype=np.uint8)
        a[2:5, 2:5, 2:4] = 1
        b[3:6, 2:5, 2:4] = 1
        base_d, base_a = dsc(a, b, 1), asd(a, b, 1)
        shifted_a = np.roll(a, (2, 1, 2), axis=(0, 1, 2))
        shifted_b = np.roll(b, (2, 1, 2), axis=(0, 1, 2))
        assert dsc(shifted_a, shifted_b, 1) == base_d
        assert asd(shifted_a, shifted_b, 1) == base_a

    def test_bad_spacing(self):
        mask = np.ones((2, 2, 2), dtype=np.uint8)
        with pytest.raises(ValueError, match="spacing"):
            asd(mask, mask, 1, (0.0, 1.0, 1.0))


@settings(max_examples=60, deadline=None)
@given(
    data=st.data(),
    dims=st.tuples(
        st.integers(2, 6), st.integers(2, 6), st.integers(2, 6)
    ),
)
def test_asd_property_matches_oracle(data, dims):
    n = int(np.prod(dims))
    bits_a = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    bits_b = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    pred = np.array(bits_a, dtype=np.uint8).reshape(dims)
    gt = np.array(bits_b, dtype=np.uint8).reshape(dims)
    want = asd_oracle(pred, gt, 1, (1.0, 1.0, 1.0))
    got = asd(pred, gt, 1, (1.0, 1.0, 1.0))
    assert got == want


class TestEvaluateCaseAndReport:
    def test_perfect_prediction(self):
        rng = np.random.default_rng(4)
        gt = rng.integers(0, 4, size=(6, 6, 4)).astype(np.uint8)
        result = evaluate_case(gt, gt, (1, 1, 1), classes=[1, 2, 3])
        for c in (1, 2, 3):
            assert result[c]["dsc"] == 1.0
            assert result[c]["asd"] in (0.0, None)  # None when class absent

    def test_absent_class_convention(self):
        vol = np.zeros((4, 4, 4), dtype=np.uint8)
        result = evaluate_case(vol, vol, (1, 1, 1), classes=[2])
        assert result[2]["dsc"] == 1.0 and result[2]["asd"] is None

    def test_report_aggregate_and_serialization(self, tmp_path):
        report = MetricsReport(classes=(1, 2))
        report.add_case("case_a", {1: {"dsc": 0.8, "asd": 1.0}, 2: {"dsc": 1.0, "asd": None}})
        report.add_case("case_b", {1: {"dsc": 0.6, "asd": 3.0}, 2: {"dsc": 0.9, "asd": 2.0}})
        agg = report.aggregate()
        assert agg["1"]["dsc_mean"] == pytest.approx(0.7)
        assert agg["1"]["asd_mean"] == pytest.approx(2.0)
        assert agg["2"]["asd_undefined_cases"] == 1

        report.to_json(tmp_path / "metrics.json")
        report.to_csv(tmp_path / "metrics.csv")
        payload = json.loads((tmp_path / "metrics.json").read_text())
        assert payload["aggregate"]["1"]["num_cases"] == 2
        rows = (tmp_path / "metrics.csv").read_text().strip().splitlines()
        assert rows[0] == "case_id,class,dsc,asd"
        assert len(rows) == 1 + 2 * 2
        assert rows[2].endswith(",")  # undefined ASD cell is empty
