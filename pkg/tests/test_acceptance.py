"""Acceptance gate: every release criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -s` to see one line per criterion.
"""

import numpy as np

import som_anomaly as sa
from som_anomaly.scoring import NodeStatistics

from test_metrics import auroc_pairwise_oracle, pro_brute_oracle


def _criterion(name, ok, detail=""):
    print(f"[acceptance] {'PASS' if ok else 'FAIL'} {name}  {detail}")
    assert ok, f"{name}: {detail}"


def test_mahalanobis_vs_explicit_inverse_oracle():
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 17))
        a = rng.normal(size=(d, d))
        sigma = a @ a.T + np.eye(d)
        m = rng.normal(size=d)
        stats = NodeStatistics(0, m, 10, np.linalg.cholesky(sigma), 1.0)
        f = rng.normal(size=d) * 2.0
        ours = sa.mahalanobis(f, stats)
        oracle = float(np.sqrt((f - m) @ np.linalg.inv(sigma) @ (f - m)))
        worst = max(worst, abs(ours - oracle) / oracle)
    _criterion("mahalanobis vs explicit-inverse oracle (200 SPD, D<=16)", worst <= 1e-8,
               f"max relative error {worst:.3e} <= 1e-8")


def test_covariance_fit_vs_outer_product_oracle():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 9))
        n = int(rng.integers(2, 101))
        eps = float(rng.uniform(0.001, 0.1))
        m = rng.normal(size=d)
        members = m + rng.normal(size=(n, d))
        stats = sa.fit_node_statistics(members, m, eps)
        sigma = stats.chol_lower @ stats.chol_lower.T
        oracle = np.zeros((d, d))
        for f in members:
            oracle += np.outer(f - m, f - m)
        oracle = oracle / (n - 1) + eps * np.eye(d)
        worst = max(worst, float(np.max(np.abs(sigma - oracle))))
    _criterion("fit_node_statistics vs dense outer-product oracle (D<=8, N<=100)",
               worst <= 1e-10, f"max entrywise error {worst:.3e} <= 1e-10")


def test_bmu_and_topk_vs_linear_scan_oracle():
    rng = np.random.default_rng(102)
    mismatches = 0
    queries = 0
    for _ in range(10):
        side = int(rng.integers(2, 7))
        dim = int(rng.integers(2, 9))
        grid = sa.SomGrid(side, rng.normal(size=(side * side, dim)))
        for _ in range(100):
            f = rng.normal(size=dim)
            dists = [(float(np.sum((f - m) ** 2)), idx) for idx, m in enumerate(grid.weights)]
            order = [idx for _, idx in sorted(dists)]
            k = int(rng.integers(1, side * side + 1))
            if sa.find_bmu(grid, f) != order[0]:
                mismatches += 1
            if list(sa.find_topk(grid, f, k)) != order[:k]:
                mismatches += 1
            queries += 1
    _criterion("find_bmu/find_topk vs exhaustive scan/sort oracle", mismatches == 0,
               f"{queries} queries, {mismatches} disagreements")


def test_auroc_vs_pairwise_counting_oracle():
    rng = np.random.default_rng(103)
    worst = 0.0
    done = 0
    while done < 500:
        n = int(rng.integers(2, 201))
        scores = np.round(rng.normal(size=n), 1)  # rounding forces ties
        labels = (rng.uniform(size=n) < rng.uniform(0.2, 0.8)).astype(int)
        if labels.sum() in (0, n):
            continue
        worst = max(worst, abs(sa.auroc(scores, labels) - auroc_pairwise_oracle(scores, labels)))
        done += 1
    _criterion("auroc vs pairwise-counting oracle (500 sets, n<=200, ties)", worst <= 1e-12,
               f"max abs error {worst:.3e} <= 1e-12")


def test_pro_vs_brute_force_threshold_sweep_oracle():
    rng = np.random.default_rng(104)
    worst = 0.0
    done = 0
    while done < 50:
        h, w = (int(v) for v in rng.integers(2, 9, size=2))
        mask = (rng.uniform(size=(h, w)) < 0.4).astype(int)
        if mask.sum() in (0, h * w):
            continue
        scores = np.round(rng.uniform(size=(h, w)), 2)
        worst = max(worst, abs(sa.pro_score(scores, mask) - pro_brute_oracle(scores, mask)))
        done += 1
    _criterion("pro_score vs brute-force threshold sweep oracle (50 instances <=8x8)",
               worst <= 1e-9, f"max abs error {worst:.3e} <= 1e-9")


def test_gaussian_smooth_impulse_vs_dense_convolution_oracle():
    sigma = 4.0
    radius = int(np.ceil(4 * sigma))
    size = 2 * radius + 41
    img = np.zeros((size, size))
    img[size // 2, size // 2] = 1.0
    ours = sa.gaussian_smooth(img, sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel_1d = np.exp(-(xs**2) / (2 * sigma * sigma))
    kernel_2d = np.outer(kernel_1d, kernel_1d) / kernel_1d.sum() ** 2
    oracle = np.zeros_like(img)
    c = size // 2
    oracle[c - radius : c + radius + 1, c - radius : c + radius + 1] = kernel_2d
    err = float(np.max(np.abs(ours - oracle)))
    _criterion("gaussian_smooth impulse vs direct 2-d convolution oracle", err <= 1e-6,
               f"max abs error {err:.3e} <= 1e-6")


def test_synthetic_benchmark_detection_quality(benchmark_run):
    bench = benchmark_run["bench"]
    maps = benchmark_run["maps_k4"]
    scores = benchmark_run["scores_k4"]
    image_auroc = sa.auroc(scores, bench.labels)
    pixel_auroc = sa.auroc(maps.ravel(), bench.masks.ravel())
    _criterion("synthetic benchmark image AUROC >= 0.99", image_auroc >= 0.99,
               f"image AUROC {image_auroc:.4f}")
    _criterion("synthetic benchmark pixel AUROC >= 0.97", pixel_auroc >= 0.97,
               f"pixel AUROC {pixel_auroc:.4f}")


def test_synthetic_benchmark_strict_score_separation(benchmark_run):
    bench = benchmark_run["bench"]
    scores = benchmark_run["scores_k4"]
    lo = float(scores[bench.labels == 1].min())
    hi = float(scores[bench.labels == 0].max())
    _criterion("every anomalous image scores above every normal image", lo > hi,
               f"min anomalous {lo:.3f} > max normal {hi:.3f}")


def test_ablation_topk_four_not_worse_than_one(benchmark_run):
    bench = benchmark_run["bench"]
    auc4 = sa.auroc(benchmark_run["scores_k4"], bench.labels)
    auc1 = sa.auroc(benchmark_run["scores_k1"], bench.labels)
    _criterion("ablation: image AUROC at k=4 >= k=1", auc4 >= auc1,
               f"k=4 {auc4:.4f} vs k=1 {auc1:.4f}")


def test_property_patch_score_monotone_in_k():
    rng = np.random.default_rng(105)
    grid = sa.SomGrid(3, rng.normal(size=(9, 5)) * 2)
    stats = [
        sa.fit_node_statistics(grid.weights[i] + rng.normal(size=(8, 5)), grid.weights[i],
                               0.05, index=i)
        for i in range(9)
    ]
    violations = 0
    for _ in range(50):
        f = rng.normal(size=5)
        values = [sa.patch_score(f, grid, stats, k) for k in range(1, 10)]
        violations += sum(1 for a, b in zip(values[1:], values[:-1]) if a > b + 1e-15)
    _criterion("property: patch_score non-increasing in k", violations == 0,
               f"{violations} violations over 50 queries x k in 1..9")


def test_property_metrics_monotone_transform_invariance():
    rng = np.random.default_rng(106)
    scores = rng.normal(size=60)
    labels = (rng.uniform(size=60) < 0.4).astype(int)
    labels[0], labels[1] = 0, 1
    base = sa.auroc(scores, labels)
    auroc_dev = max(
        abs(sa.auroc(2.0 * scores + 3.0, labels) - base),
        abs(sa.auroc(np.exp(scores), labels) - base),
    )
    mask = (rng.uniform(size=(8, 8)) < 0.3).astype(int)
    mask[2, 2] = 1
    pixel = rng.uniform(size=(8, 8))
    pro_base = sa.pro_score(pixel, mask)
    pro_dev = max(
        abs(sa.pro_score(5.0 * pixel + 1.0, mask) - pro_base),
        abs(sa.pro_score(np.exp(pixel), mask) - pro_base),
    )
    ok = auroc_dev <= 1e-12 and pro_dev <= 1e-12
    _criterion("property: metrics invariant under monotone transforms", ok,
               f"auroc dev {auroc_dev:.2e}, pro dev {pro_dev:.2e}")


def test_property_training_determinism():
    rng = np.random.default_rng(107)
    gallery = sa.FeatureGallery(rng.normal(size=(6, 5, 5, 4)).astype(np.float32))
    grid = sa.init_sample(gallery, 3, seed=9)
    sched = sa.TrainSchedule(epochs=3, seed=21)
    a = sa.train(grid, gallery, sched)
    b = sa.train(grid, gallery, sched)
    ok = np.array_equal(a.weights, b.weights)
    _criterion("property: training bit-identical under a fixed seed", ok)


def test_property_format_roundtrips(tmp_path):
    rng = np.random.default_rng(108)
    ok = True
    for shape in [(3, 4), (2, 3, 4), (7,), (0,)]:
        t = sa.TensorFile(shape, rng.normal(size=shape).astype(np.float32))
        path = tmp_path / "t.smdt"
        sa.write_tensor(t, path)
        back = sa.read_tensor(path)
        ok = ok and back.shape == t.shape and back.data.tobytes() == t.data.tobytes()
    grid = sa.SomGrid(2, rng.normal(size=(4, 3)))
    stats = [
        sa.fit_node_statistics(grid.weights[i] + rng.normal(size=(5, 3)), grid.weights[i],
                               0.1, index=i)
        for i in range(4)
    ]
    p1, p2 = tmp_path / "m1.smdm", tmp_path / "m2.smdm"
    sa.save_model(grid, stats, p1, top_k=2)
    g1, s1, _ = sa.load_model(p1)
    sa.save_model(g1, s1, p2, top_k=2)
    ok = ok and p1.read_bytes() == p2.read_bytes()
    _criterion("property: tensor and model files round-trip bit-exactly", ok)
