import numpy as np
import pytest

from fishbone import shapes
from fishbone.mesh_io import CleanPart, RawMesh, clean_and_normalize
from fishbone.ribs import Rib
from fishbone.skinning import (
    RigCacheKey,
    bandwidth,
    cache_lookup_or_compute,
    compute_rib_weights,
    compute_spine_weights,
    project_to_rib,
    raw_weight,
    support_radius,
)


def make_rib(points, closed=True):
    pts = np.asarray(points, dtype=np.float64)
    return Rib(pts, 0, 0, closed, 0, np.zeros((len(pts), 2), dtype=np.int64),
               np.zeros(len(pts)))


def square_rib():
    return make_rib([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])


class TestProjection:
    def test_vertex_on_polyline(self):
        rib = square_rib()
        edge, t, d = project_to_rib(np.array([0.25, 0.0, 0.0]), rib)
        assert edge == 0
        assert t == pytest.approx(0.25)
        assert d == pytest.approx(0.0, abs=1e-15)

    def test_square_center_tie_lowest_edge(self):
        rib = square_rib()
        edge, t, d = project_to_rib(np.array([0.5, 0.5, 0.0]), rib)
        assert d == pytest.approx(0.5)
        assert edge == 0  # all four sides tie at 0.5; lowest index wins

    def test_wrap_edge_included(self):
        rib = square_rib()
        edge, t, d = project_to_rib(np.array([-0.2, 0.5, 0.0]), rib)
        assert edge == 3  # closing edge (0,1,0)->(0,0,0)

    def test_open_rib_excludes_wrap(self):
        rib = make_rib([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], closed=False)
        edge, t, d = project_to_rib(np.array([-0.2, 0.5, 0.0]), rib)
        assert edge in (0, 2)
        assert d > 0.2

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(12, 3))
        rib = make_rib(pts)
        seg_a = pts
        seg_b = np.roll(pts, -1, axis=0)
        queries = rng.normal(size=(200, 3)) * 2
        edges, params, dists = project_to_rib(queries, rib)
        for q, e, t, d in zip(queries, edges, params, dists):
            best = (np.inf, -1, 0.0)
            for j, (a, b) in enumerate(zip(seg_a, seg_b)):
                ab = b - a
                tt = np.clip(np.dot(q - a, ab) / np.dot(ab, ab), 0, 1)
                dd = np.linalg.norm(q - (a + tt * ab))
                if dd < best[0]:
                    best = (dd, j, tt)
            assert e == best[1]
            assert t == pytest.approx(best[2], abs=1e-12)
            assert d == pytest.approx(best[0], abs=1e-12)


class TestBandwidth:
    def test_formula_value(self):
        # sigma = n*spacing / sqrt(-2 ln w_min); direct evaluation oracle
        sigma = bandwidth(part_extent=1.0, n_levels=1, n=2.0, w_min=1e-4)
        oracle = 2.0 / np.sqrt(-2.0 * np.log(1e-4))
        assert sigma == pytest.approx(oracle, abs=1e-15)
        assert sigma == pytest.approx(0.46599, abs=1e-4)

    def test_cutoff_exact_zero(self):
        sigma = bandwidth(1.0, 4)
        r = support_radius(sigma)
        assert raw_weight(np.array([r]), sigma)[0] == 0.0
        assert raw_weight(np.array([r * 0.999]), sigma)[0] > 0.0

    def test_cutoff_equals_n_spacings(self):
        # by construction the support radius is exactly n * spacing
        sigma = bandwidth(part_extent=1.0, n_levels=5, n=2.0)
        assert support_radius(sigma) == pytest.approx(2.0 * (1.0 / 5.0))

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            bandwidth(1.0, 0)
        with pytest.raises(ValueError):
            bandwidth(1.0, 3, w_min=1.5)


def grid_part_with_ribs(n_side=12):
    v, f = shapes.grid_sheet(n_side, n_side, size=1.0)
    part = clean_and_normalize(RawMesh(v, f)).parts[0]
    lo = part.vertices.min(axis=0)
    hi = part.vertices.max(axis=0)
    ribs = []
    for frac in (0.25, 0.5, 0.75):
        x = lo[0] + frac * (hi[0] - lo[0])
        line = np.column_stack([
            np.full(8, x), np.linspace(lo[1], hi[1], 8), np.zeros(8),
        ])
        ribs.append(make_rib(line, closed=False))
    return part, ribs


class TestRibWeights:
    def test_row_sums(self):
        part, ribs = grid_part_with_ribs()
        sigma = bandwidth(part.max_extent, 3)
        wm = compute_rib_weights(part, ribs, sigma)
        wm.validate()
        sums = np.zeros(wm.shape[0])
        np.add.at(sums, wm.rows, wm.values)
        nz = sums > 0
        assert np.abs(sums[nz] - 1.0).max() < 1e-9

    def test_cutoff_support(self):
        part, ribs = grid_part_with_ribs()
        sigma = bandwidth(part.max_extent, 6)
        wm = compute_rib_weights(part, ribs, sigma)
        assert (wm.proj_distance < support_radius(sigma)).all()

    def test_equidistant_ribs_half_weight(self):
        part, ribs = grid_part_with_ribs()
        sigma = bandwidth(part.max_extent, 2)
        wm = compute_rib_weights(part, [ribs[0], ribs[2]], sigma)
        # vertices on the middle column are equidistant from both ribs
        mid = np.flatnonzero(np.abs(part.vertices[:, 0]) < 1e-9)
        for vtx in mid:
            sel = wm.rows == vtx
            if sel.sum() == 2:
                np.testing.assert_allclose(wm.values[sel], 0.5, atol=1e-12)

    def test_raw_weight_at_zero_distance(self):
        assert raw_weight(np.array([0.0]), 0.3)[0] == pytest.approx(1.0 - 1e-4)

    def test_pruned_equals_bruteforce(self):
        part, ribs = grid_part_with_ribs(16)
        sigma = bandwidth(part.max_extent, 5)
        a = compute_rib_weights(part, ribs, sigma, prune=True)
        b = compute_rib_weights(part, ribs, sigma, prune=False)
        assert np.array_equal(a.rows, b.rows)
        assert np.array_equal(a.cols, b.cols)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.proj_edge, b.proj_edge)
        assert np.array_equal(a.proj_param, b.proj_param)
        assert np.array_equal(a.proj_distance, b.proj_distance)

    def test_weight_lipschitz(self):
        # |dw/dd| <= (1/sigma) e^{-1/2}; probe with epsilon sweeps
        sigma = 0.37
        eps = 1e-6
        bound = np.exp(-0.5) / sigma
        d = np.linspace(0, support_radius(sigma), 300)
        w0 = raw_weight(d, sigma)
        w1 = raw_weight(d + eps, sigma)
        assert (np.abs(w1 - w0) <= bound * eps * 1.0001).all()


class TestSpineWeights:
    def test_rows_and_fallback(self):
        part, _ = grid_part_with_ribs()
        keys = np.array([[-0.25, 0.0, 0.0], [0.25, 0.0, 0.0], [5.0, 5.0, 5.0]])
        sigma = 0.2
        wm = compute_spine_weights(part, keys, sigma)
        wm.validate()
        sums = np.zeros(wm.shape[0])
        np.add.at(sums, wm.rows, wm.values)
        # spine weights always cover: every row sums to 1
        assert np.abs(sums - 1.0).max() < 1e-9

    def test_far_vertex_rigid(self):
        v = np.array([[0, 0, 0], [10.0, 0, 0], [0, 1, 0]])
        part = CleanPart(v, np.array([[0, 1, 2]]), 0, True, None)
        keys = np.array([[0.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        wm = compute_spine_weights(part, keys, sigma=0.3)
        fb = {int(r): int(k) for r, k in wm.rigid_fallback}
        assert 1 in fb and fb[1] == 0  # far vertex pinned to its nearest key
        sel = (wm.rows == 1)
        assert sel.sum() == 1 and wm.values[sel][0] == 1.0

    def test_coincident_vertex_max_weight(self):
        v = np.array([[0.0, 0.0, 0.0], [0.05, 0, 0], [0, 0.05, 0]])
        part = CleanPart(v, np.array([[0, 1, 2]]), 0, True, None)
        keys = np.array([[0.0, 0.0, 0.0], [0.08, 0.0, 0.0]])
        wm = compute_spine_weights(part, keys, sigma=0.1)
        sel = wm.rows == 0
        w = {int(c): val for c, val in zip(wm.cols[sel], wm.values[sel])}
        assert w[0] == max(w.values())


class TestCache:
    def _inputs(self):
        part, ribs = grid_part_with_ribs()
        from fishbone.spine import SpineTree

        keys = np.array([[-0.25, 0, 0], [0.0, 0, 0], [0.25, 0, 0]])
        spine = SpineTree(keys, [np.arange(3)], np.zeros(0, dtype=np.int64),
                          np.arange(3), np.array([-1, 0, 1]), np.zeros(3, dtype=np.int64))
        return part, ribs, spine

    def test_hit_skips_recomputation(self, tmp_path):
        part, ribs, spine = self._inputs()
        sigma = bandwidth(part.max_extent, 3)
        key = RigCacheKey.for_part(part, ribs, spine, sigma, sigma, 1e-4)
        calls = []

        def compute():
            calls.append(1)
            return (compute_rib_weights(part, ribs, sigma),
                    compute_spine_weights(part, spine.key_points, sigma))

        _, _, hit1 = cache_lookup_or_compute(key, compute, tmp_path)
        _, _, hit2 = cache_lookup_or_compute(key, compute, tmp_path)
        assert (hit1, hit2) == (False, True)
        assert len(calls) == 1

    def test_digest_sensitivity(self):
        part, ribs, spine = self._inputs()
        k1 = RigCacheKey.for_part(part, ribs, spine, 0.3, 0.3, 1e-4)
        v2 = part.vertices.copy()
        v2[0, 0] += 1e-6
        part2 = CleanPart(v2, part.faces, 0, part.is_thin_shell, part.normalization)
        k2 = RigCacheKey.for_part(part2, ribs, spine, 0.3, 0.3, 1e-4)
        assert k1.digest != k2.digest
        k3 = RigCacheKey.for_part(part, ribs, spine, 0.3, 0.3, 1e-4)
        assert k1.digest == k3.digest

    def test_roundtrip_bitwise(self, tmp_path):
        part, ribs, spine = self._inputs()
        sigma = bandwidth(part.max_extent, 3)
        key = RigCacheKey.for_part(part, ribs, spine, sigma, sigma, 1e-4)

        def compute():
            return (compute_rib_weights(part, ribs, sigma),
                    compute_spine_weights(part, spine.key_points, sigma))

        wr1, ws1, _ = cache_lookup_or_compute(key, compute, tmp_path)
        wr2, ws2, hit = cache_lookup_or_compute(key, compute, tmp_path)
        assert hit
        for a, b in ((wr1, wr2), (ws1, ws2)):
            assert np.array_equal(a.rows, b.rows)
            assert np.array_equal(a.cols, b.cols)
            assert np.array_equal(a.values, b.values)
        assert np.array_equal(wr1.proj_param, wr2.proj_param)
        assert np.array_equal(ws1.rigid_fallback, ws2.rigid_fallback)

    def test_corrupt_entry_recomputed(self, tmp_path):
        part, ribs, spine = self._inputs()
        sigma = bandwidth(part.max_extent, 3)
        key = RigCacheKey.for_part(part, ribs, spine, sigma, sigma, 1e-4)

        def compute():
            return (compute_rib_weights(part, ribs, sigma),
                    compute_spine_weights(part, spine.key_points, sigma))

        cache_lookup_or_compute(key, compute, tmp_path)
        fbw = tmp_path / key.digest[:2] / f"{key.digest}.fbw"
        fbw.write_bytes(fbw.read_bytes()[:100])  # truncate
        _, _, hit = cache_lookup_or_compute(key, compute, tmp_path)
        assert not hit
        _, _, hit2 = cache_lookup_or_compute(key, compute, tmp_path)
        assert hit2  # overwritten entry is valid again

    def test_env_var_root(self, tmp_path, monkeypatch):
        from fishbone.skinning import cache_root

        monkeypatch.setenv("FISHBONE_CACHE", str(tmp_path / "cc"))
        assert cache_root() == tmp_path / "cc"
