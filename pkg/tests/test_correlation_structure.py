import numpy as np
import pytest

from recurdet.correlation_structure import (
    EmbeddedModel,
    PatchGraph,
    PatchPairEdge,
    build_patch_graph,
    correct_edge_patch,
    crop_about_origin,
    detect_pair,
    embed,
    embedding_objective,
    fit_gaussian,
    model_from_json,
    model_to_json,
    prune_graph,
    ridge_fit,
)
from recurdet.errors import EmptyGraph, ZeroMass
from recurdet.image_core import (
    BinaryMap,
    CorrelationMap,
    GrayImage,
    Patch,
    lag_origin,
    ncc_map,
)
from recurdet.patch_mining import MiningConfig


def sparse_map(rng, shape, n):
    z = np.zeros(shape, dtype=bool)
    rows = rng.integers(0, shape[0], size=n)
    cols = rng.integers(0, shape[1], size=n)
    z[rows, cols] = True
    return z


class TestDetectPair:
    def test_exact_translation(self):
        rng = np.random.default_rng(0)
        zi = sparse_map(rng, (60, 60), 30)
        zj = np.zeros_like(zi)
        zj[5:, :-3] = zi[:-5, 3:]  # z_j is z_i shifted by (5, -3)
        edge = detect_pair(BinaryMap(zi), BinaryMap(zj))
        assert edge is not None
        assert edge.offset == (5.0, -3.0)
        assert edge.peak_ratio > 2

    def test_single_points_give_infinite_ratio(self):
        zi = np.zeros((20, 20), dtype=bool)
        zj = np.zeros((20, 20), dtype=bool)
        zi[4, 6] = True
        zj[10, 9] = True
        edge = detect_pair(BinaryMap(zi), BinaryMap(zj))
        assert edge is not None
        assert edge.offset == (6.0, 3.0)
        assert edge.peak_ratio == float("inf")

    def test_independent_maps_match_reference_decision(self):
        # Brute-force tau plus a manual peak scan is the oracle.
        from test_image_core import brute_force_tau

        hits = 0
        for seed in range(8):
            rng = np.random.default_rng(100 + seed)
            zi = sparse_map(rng, (18, 18), 12)
            zj = sparse_map(rng, (18, 18), 12)
            edge = detect_pair(BinaryMap(zi), BinaryMap(zj))

            tau = brute_force_tau(zi, zj)
            br, bc = np.unravel_index(np.argmax(tau), tau.shape)
            best = tau[br, bc]
            second = 0.0
            for r in range(tau.shape[0]):
                for c in range(tau.shape[1]):
                    if abs(r - br) <= 4 and abs(c - bc) <= 4:
                        continue
                    v = tau[r, c]
                    strict = True
                    for dr in (-1, 0, 1):
                        for dc in (-1, 0, 1):
                            if dr == dc == 0:
                                continue
                            rr, cc = r + dr, c + dc
                            if 0 <= rr < tau.shape[0] and 0 <= cc < tau.shape[1]:
                                if tau[rr, cc] >= v:
                                    strict = False
                    if strict and v > second:
                        second = v
            expect_edge = best > 0 and (second <= 0 or best / second > 2)
            assert (edge is not None) == expect_edge
            if edge is not None:
                hits += 1
                assert edge.offset == (br - 17.0, bc - 17.0)
        assert hits < 8  # random pairs are mostly rejected

    def test_antisymmetric_offsets(self):
        rng = np.random.default_rng(1)
        zi = sparse_map(rng, (50, 50), 25)
        zj = np.zeros_like(zi)
        zj[7:, 2:] = zi[:-7, :-2]
        ij = detect_pair(BinaryMap(zi), BinaryMap(zj))
        ji = detect_pair(BinaryMap(zj), BinaryMap(zi))
        assert ij is not None and ji is not None
        assert ij.offset == (-ji.offset[0], -ji.offset[1])

    def test_max_lag_restricts_search(self):
        zi = np.zeros((40, 40), dtype=bool)
        zj = np.zeros((40, 40), dtype=bool)
        zi[5, 5] = True
        zj[35, 35] = True  # true lag (30, 30)
        assert detect_pair(BinaryMap(zi), BinaryMap(zj), max_lag=10) is None

    def test_empty_map_gives_none(self):
        z = BinaryMap(np.zeros((10, 10), dtype=bool))
        full = np.zeros((10, 10), dtype=bool)
        full[3, 3] = True
        assert detect_pair(z, BinaryMap(full)) is None

    def test_sparse_window_matches_fft_path(self):
        # The capped sparse-count path must agree with the masked FFT path.
        from recurdet.correlation_structure import _tau_window
        from recurdet.image_core import cross_correlate_binary, lag_origin

        rng = np.random.default_rng(9)
        for _ in range(5):
            zi = BinaryMap(sparse_map(rng, (40, 40), 20))
            zj = BinaryMap(sparse_map(rng, (40, 40), 20))
            cap = 12
            a, (orr, orc) = _tau_window(zi, zj, cap)
            tau = cross_correlate_binary(zi, zj)
            cr, cc = lag_origin(tau)
            full = tau.data[cr - cap : cr + cap + 1, cc - cap : cc + cap + 1]
            win = a[orr - cap : orr + cap + 1, orc - cap : orc + cap + 1]
            assert np.array_equal(win, full)


class TestFitGaussian:
    def test_isotropic_gaussian(self):
        rr, cc = np.mgrid[-16:17, -16:17]
        bump = np.exp(-(rr**2 + cc**2) / (2 * 4.0))
        fit = fit_gaussian(CorrelationMap(bump))
        assert fit.covariance[0, 0] == pytest.approx(4.0, rel=0.05)
        assert fit.covariance[1, 1] == pytest.approx(4.0, rel=0.05)
        assert fit.eccentricity == pytest.approx(1.0, rel=0.05)

    def test_horizontal_ridge_is_eccentric(self):
        a = np.zeros((31, 31))
        a[15, 5:26] = 1.0
        fit = fit_gaussian(CorrelationMap(a))
        assert fit.eccentricity > 2

    def test_single_impulse(self):
        a = np.zeros((21, 21))
        a[10, 10] = 3.0
        fit = fit_gaussian(CorrelationMap(a))
        assert np.allclose(fit.covariance, 0.0)
        assert fit.eccentricity == 1.0

    def test_zero_mass(self):
        with pytest.raises(ZeroMass):
            fit_gaussian(CorrelationMap(-np.ones((5, 5))))

    def test_moments_match_hand_computation(self):
        a = np.zeros((7, 7))
        a[3, 3] = 1.0
        a[3, 5] = 1.0  # half mass at dc=0, half at dc=+2
        fit = fit_gaussian(CorrelationMap(a))
        assert fit.covariance[1, 1] == pytest.approx(2.0)
        assert fit.covariance[0, 0] == pytest.approx(0.0)


def make_bar_image(n_rows=4, n_cols=5, bar_h=27, bar_w=3, pitch=45):
    h = n_rows * pitch + 20
    w = n_cols * pitch + 20
    img = np.zeros((h, w))
    centers = []
    for i in range(n_rows):
        for j in range(n_cols):
            r = 20 + i * pitch
            c = 20 + j * pitch
            img[r : r + bar_h, c : c + bar_w] = 0.8
            centers.append((r + bar_h // 2, c + bar_w // 2))
    return GrayImage(img), centers


class TestEdgeCorrection:
    def test_bars_scene_count(self):
        cfg = MiningConfig()
        img, centers = make_bar_image()
        # Patch over a bar's left edge, mid-height.
        r, c = centers[0]
        patch = Patch.from_image(img, (r, c - 1), side=9)
        rho = ncc_map(img, patch)
        raw = ridge_fit(rho, cfg.object_size)
        assert raw.eccentricity > 2
        from recurdet.image_core import non_max_suppress

        before = non_max_suppress(rho, 1 - cfg.epsilon, cfg.patch_side).count
        corrected = correct_edge_patch(rho, cfg)
        assert before > 1.5 * 20
        assert abs(corrected.count - 20) <= 2  # within 10%

    def test_two_ridge_map(self):
        cfg = MiningConfig()
        a = np.zeros((120, 60))
        a[20:40, 30] = 1.0
        a[75:95, 30] = 1.0
        corrected = correct_edge_patch(CorrelationMap(a), cfg)
        assert corrected.count == 2
        pts = corrected.points()
        assert {tuple(p) for p in pts} <= {(r, 30) for r in range(20, 40)} | {
            (r, 30) for r in range(75, 95)
        }

    def test_crop_about_origin(self):
        m = CorrelationMap(np.arange(81.0).reshape(9, 9))
        c = crop_about_origin(m, 2)
        assert c.data.shape == (5, 5)
        assert c.data[2, 2] == m.data[4, 4]


def edge(i, j, off, ratio=5.0):
    return PatchPairEdge(i=i, j=j, offset=(float(off[0]), float(off[1])), peak_ratio=ratio)


class TestPruneGraph:
    def test_isolated_vertex_removed(self):
        g = PatchGraph(vertices=(0, 1, 2), edges=(edge(0, 1, (1, 0)),))
        pruned = prune_graph(g, n=10)
        assert set(pruned.vertices) == {0, 1}

    def test_complete_subgraph_survives(self):
        vs = tuple(range(5))
        es = tuple(edge(i, j, (i - j, 0)) for i in range(5) for j in range(i + 1, 5))
        pruned = prune_graph(PatchGraph(vertices=vs, edges=es), n=10)
        assert set(pruned.vertices) == set(vs)

    def test_star_graph_single_pass(self):
        # n=20: leaves (degree 1 < 2) go, hub (degree 19) stays edge-less.
        vs = tuple(range(20))
        es = tuple(edge(0, k, (k, 0)) for k in range(1, 20))
        pruned = prune_graph(PatchGraph(vertices=vs, edges=es), n=20)
        assert pruned.vertices == (0,)
        assert pruned.edges == ()

    def test_empty_graph_error(self):
        g = PatchGraph(vertices=(0, 1), edges=())
        with pytest.raises(EmptyGraph):
            prune_graph(g, n=20)


class TestEmbed:
    def test_consistent_chain(self):
        g = PatchGraph(
            vertices=(0, 1, 2),
            edges=(edge(0, 1, (10, 0)), edge(1, 2, (10, 0))),
        )
        model = embed(g)
        assert np.allclose(model.coordinates[0], (-10, 0), atol=1e-8)
        assert np.allclose(model.coordinates[1], (0, 0), atol=1e-8)
        assert np.allclose(model.coordinates[2], (10, 0), atol=1e-8)

    def test_inconsistent_triangle_spreads_residual(self):
        # Cycle sum (3, 0): least squares leaves 1 px misfit per edge.
        g = PatchGraph(
            vertices=(0, 1, 2),
            edges=(edge(0, 1, (2, 0)), edge(1, 2, (2, 0)), edge(2, 0, (-1, 0))),
        )
        model = embed(g)
        for e in g.edges:
            misfit = model.coordinates[e.j] - model.coordinates[e.i] - np.array(e.offset)
            assert abs(abs(misfit[0]) - 1.0) < 1e-8
            assert abs(misfit[1]) < 1e-8

    def test_components_zero_centered(self):
        g = PatchGraph(
            vertices=(0, 1, 2, 3),
            edges=(edge(0, 1, (4, 2)), edge(2, 3, (-3, 7))),
        )
        model = embed(g)
        assert len(model.components) == 2
        for comp in model.components:
            total = sum(model.coordinates[v] for v in comp)
            assert np.allclose(total, 0.0, atol=1e-9)

    def test_consistent_tree_exactness(self):
        rng = np.random.default_rng(5)
        coords = {v: rng.uniform(-30, 30, size=2) for v in range(12)}
        edges = []
        for v in range(1, 12):
            u = int(rng.integers(0, v))
            edges.append(edge(u, v, coords[v] - coords[u]))
        g = PatchGraph(vertices=tuple(range(12)), edges=tuple(edges))
        model = embed(g)
        for e in g.edges:
            misfit = model.coordinates[e.j] - model.coordinates[e.i] - np.array(e.offset)
            assert np.linalg.norm(misfit) <= 1e-8

    def test_global_optimality_probe(self):
        rng = np.random.default_rng(6)
        vs = tuple(range(6))
        edges = []
        for a in range(6):
            for b in range(a + 1, 6):
                if rng.random() < 0.7:
                    edges.append(edge(a, b, rng.uniform(-10, 10, size=2)))
        g = PatchGraph(vertices=vs, edges=tuple(edges))
        model = embed(g)
        base = embedding_objective(g, model.coordinates)
        for v in vs:
            for axis in (0, 1):
                for delta in (0.1, -0.1):
                    perturbed = {k: c.copy() for k, c in model.coordinates.items()}
                    perturbed[v][axis] += delta
                    assert embedding_objective(g, perturbed) >= base - 1e-12

    def test_model_json_roundtrip(self):
        rng = np.random.default_rng(7)
        g = PatchGraph(vertices=(0, 1), edges=(edge(0, 1, (3, -2)),))
        model = embed(g)
        patches = {v: Patch(rng.random((9, 9))) for v in (0, 1)}
        doc = model_to_json(model, patches)
        back_model, back_patches = model_from_json(doc)
        for v in (0, 1):
            assert np.allclose(back_model.coordinates[v], model.coordinates[v])
            assert np.allclose(back_patches[v].data, patches[v].data)
        assert back_model.components == model.components


class TestBuildGraph:
    def test_translated_family(self):
        rng = np.random.default_rng(8)
        base = sparse_map(rng, (70, 70), 25)
        occ = {0: BinaryMap(base)}
        shifts = {1: (4, 0), 2: (0, 6)}
        for pid, (dr, dc) in shifts.items():
            z = np.zeros_like(base)
            z[dr:, dc:] = base[: base.shape[0] - dr, : base.shape[1] - dc]
            occ[pid] = BinaryMap(z)
        g = build_patch_graph(occ)
        assert set(g.vertices) == {0, 1, 2}
        assert g.offset(0, 1) is not None
        assert np.allclose(g.offset(0, 1), (4, 0))
        assert np.allclose(g.offset(1, 0), (-4, 0))
        assert np.allclose(g.offset(0, 2), (0, 6))
