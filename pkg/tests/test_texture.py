import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filterlearn import decoder, modelfile, synthdata, texture as tx
from filterlearn.imageio import load_image, save_image
from filterlearn.metrics import spearman
from filterlearn.texture import IndexEntry, RetrievalIndex


def test_top_k_pool_examples():
    assert list(tx.top_k_pool([3, 1, 4, 1, 5], 2)) == [5, 4]
    assert list(tx.top_k_pool(np.full(70, 0.3), 64)) == [0.3] * 64
    v = np.random.default_rng(0).normal(size=64)
    assert np.array_equal(tx.top_k_pool(v, 64), np.sort(v)[::-1])
    with pytest.raises(ValueError):
        tx.top_k_pool([1, 2], 3)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=5, max_size=40), st.randoms(use_true_random=False))
def test_top_k_pool_ignores_input_order(v, rnd):
    w = list(v)
    rnd.shuffle(w)
    assert np.array_equal(tx.top_k_pool(v, 5), tx.top_k_pool(w, 5))


def test_pool_groups_cover_every_window_once():
    flat = np.sort(np.concatenate(tx._POOL_GROUPS))
    assert np.array_equal(flat, np.arange(49))
    # window (3, 3) is the centre one and pools into the centre tile
    assert 3 * 7 + 3 in tx._POOL_GROUPS[4]


def test_dimension_chain(small_texture_model):
    m = small_texture_model
    assert m.dims == (16, 12, 32)
    img = synthdata.natural_like_image(80, 1)
    assert tx.structure_feature(img, m).shape == (32,)
    assert tx.color_feature(img, m).shape == (tx.COLOR_H,)


def test_model_validates_dimensions(small_texture_model):
    m = small_texture_model
    with pytest.raises(ValueError):
        tx.TextureModel(m.color_filters, m.p2_filters, m.p3_filters, m.final_filters,
                        m.color_mean, m.p3_mean, m.final_mean, pool_size=4)
    with pytest.raises(ValueError):
        tx.TextureModel(m.color_filters, m.p3_filters, m.p3_filters, m.final_filters,
                        m.color_mean, m.p3_mean, m.final_mean, pool_size=m.pool_size)
    with pytest.raises(ValueError):
        tx.TextureModel(m.color_filters, m.p2_filters, m.p3_filters, m.final_filters,
                        m.color_mean, m.p3_mean, m.final_mean, m.pool_size, pooling="mean")


def test_default_config_dims():
    cfg = tx.TextureTrainingConfig()
    assert (cfg.h2, cfg.h3, cfg.h_final, cfg.pool_size) == (64, 192, 400, 64)
    assert cfg.pooling == "order"
    # P2: 192 -> 64, P3: 9*64=576 -> 192, final: 9*64=576 -> 400
    assert 9 * cfg.h2 == 576 and 9 * cfg.pool_size == 576


def test_training_rejects_small_or_inconsistent_configs():
    imgs = [synthdata.natural_like_image(80, 0)]
    with pytest.raises(ValueError):
        tx.train_texture_model(imgs, tx.TextureTrainingConfig(color_patches=500))
    with pytest.raises(ValueError):
        tx.train_texture_model(imgs, tx.TextureTrainingConfig(h3=192, pooling="spatial"))
    with pytest.raises(ValueError):
        tx.train_texture_model(imgs, tx.TextureTrainingConfig(pooling="mean"))
    with pytest.raises(ValueError):
        tx.train_texture_model([], tx.TextureTrainingConfig())


def test_same_seed_same_model():
    rng = np.random.default_rng(5)
    imgs = [synthdata.dead_leaves_image(80, rng) for _ in range(3)]
    cfg = tx.TextureTrainingConfig(h2=4, h3=6, h_final=6, pool_size=4, color_patches=1000, p2_patches=1000,
                                   p3_samples=1000, decoder=decoder.TrainingConfig(max_iterations=2))
    a = tx.train_texture_model(imgs, cfg, 9)
    b = tx.train_texture_model(imgs, cfg, 9)
    assert modelfile.dumps(a) == modelfile.dumps(b)


def test_color_filters_keep_first_order_statistics(small_texture_model):
    m = small_texture_model
    # trained on raw patches, so the stored mean is the mean color, not zero
    assert np.all(m.color_mean > 0.05)
    red = np.zeros((16, 16, 3))
    red[..., 0] = 0.9
    blue = np.zeros((16, 16, 3))
    blue[..., 2] = 0.9
    fr, fb = tx.color_feature(red, m), tx.color_feature(blue, m)
    assert not np.allclose(fr, fb)


def test_color_feature_depends_only_on_thumbnail(small_texture_model):
    small = np.random.default_rng(2).uniform(size=(8, 8, 3))
    big = np.kron(small, np.ones((4, 4, 1)))
    assert np.allclose(tx.color_feature(small, small_texture_model), tx.color_feature(big, small_texture_model))


def test_structure_feature_deterministic_and_layout_sensitive(small_texture_model):
    m = small_texture_model
    img = synthdata.dead_leaves_image(72, 4)
    f = tx.structure_feature(img, m)
    assert np.array_equal(f, tx.structure_feature(img, m))
    tiles = [img[y:y + 24, x:x + 24] for y in (0, 24, 48) for x in (0, 24, 48)]
    perm = [8, 7, 6, 5, 4, 3, 2, 1, 0]
    rows = [np.concatenate([tiles[perm[3 * r + c]] for c in range(3)], axis=1) for r in range(3)]
    assert not np.allclose(tx.structure_feature(np.concatenate(rows, axis=0), m), f)


def test_constant_image_structure_is_degenerate(small_texture_model):
    with pytest.raises(FloatingPointError):
        tx.structure_feature(np.zeros((72, 72, 3)), small_texture_model)


def test_order_pooling_is_sorted_per_tile(small_texture_model):
    m = small_texture_model
    pooled = tx._pooled(m, np.random.default_rng(1).uniform(size=(m.dims[0], 81)))
    assert pooled.shape == (9 * m.pool_size,)
    assert np.all(np.diff(pooled.reshape(9, -1), axis=1) <= 0)


def test_spatial_pooling_mode(small_texture_model):
    m = small_texture_model
    rng = np.random.default_rng(1)
    h2 = m.dims[0]
    p3 = decoder.from_flat(decoder.initial_parameters(9 * h2, m.pool_size, rng), 9 * h2, m.pool_size)
    sm = tx.TextureModel(m.color_filters, m.p2_filters, p3, m.final_filters, m.color_mean,
                         np.zeros(9 * h2), m.final_mean, m.pool_size, pooling="spatial")
    resp = rng.uniform(size=(h2, 81))
    pooled = tx._pooled(sm, resp)
    assert pooled.shape == (9 * m.pool_size,)
    # centre tile = per-unit max over its nine windows
    s3 = decoder.forward(p3, tx._p3_inputs(resp, "spatial"))
    assert np.array_equal(pooled[4 * m.pool_size:5 * m.pool_size], s3[:, tx._POOL_GROUPS[4]].max(axis=1))
    with pytest.raises(ValueError):
        tx.TextureModel(m.color_filters, m.p2_filters, m.p3_filters, m.final_filters, m.color_mean,
                        m.p3_mean, m.final_mean, m.pool_size, pooling="spatial")


def _index(colors, structures, labels):
    return RetrievalIndex(tuple(IndexEntry(f"i{n}", lab, np.asarray(c, float), np.asarray(s, float))
                                for n, (c, s, lab) in enumerate(zip(colors, structures, labels))))


def test_query_hand_corpus():
    # all colors tie, so the prefilter keeps color order = index order
    color = [[1, 2, 3]] * 4
    q = [1, 2, 3, 4, 5]
    structures = [q, [5, 4, 3, 2, 1], [1, 2, 3, 5, 4], [2, 1, 3, 4, 5]]
    idx = _index(color, structures, ["a", "b", "a", "c"])
    res, ids = tx.query(idx, "i0", prefilter_fraction=1.0, return_ids=True)
    # spearman vs q: i1 -1.0, i2 0.9, i3 0.9 -> stable order i2, i3, i1
    assert ids == ["i2", "i3", "i1"]
    assert res.query_label == "a" and res.ranked_labels == ("a", "c", "b")


def test_query_prefilter_appends_in_color_order():
    colors = [[1, 2, 3, 4], [1, 2, 3, 4], [4, 3, 2, 1], [1, 2, 4, 3], [4, 3, 1, 2]]
    structures = [[1, 2, 3], [3, 2, 1], [1, 2, 3], [3, 1, 2], [1, 2, 3]]
    idx = _index(colors, structures, [0, 0, 1, 1, 2])
    # color order i1, i3, i4, i2; the floor 2 * 2 keeps all four.
    # structure: i4 = i2 = 1 (tie kept in color order), i3 = -0.5, i1 = -1
    assert tx.query(idx, "i0", 0.25, return_ids=True)[1] == ["i4", "i2", "i3", "i1"]
    idx = _index(colors, structures, [0, 1, 2, 3, 4])
    # floor 2: survivors i1, i3 by color; i4, i2 appended in color order
    assert tx.query(idx, "i0", 0.25, return_ids=True)[1] == ["i3", "i1", "i4", "i2"]


def test_query_never_returns_self_and_duplicates_rank_first():
    rng = np.random.default_rng(0)
    base = rng.normal(size=20)
    structures = [base, base.copy()] + [rng.normal(size=20) for _ in range(6)]
    colors = [rng.normal(size=5) for _ in structures]
    colors[1] = colors[0]
    idx = _index(colors, structures, [0, 0, 1, 1, 2, 2, 3, 3])
    for prefilter in (0.25, 0.5, 1.0):
        _, ids = tx.query(idx, "i0", prefilter, return_ids=True)
        assert ids[0] == "i1"
        assert sorted(ids) == sorted(f"i{n}" for n in range(1, 8))


def test_query_errors():
    idx = _index([[1, 2], [2, 1]], [[1, 2], [2, 1]], [0, 1])
    with pytest.raises(ValueError):
        tx.query(idx, "missing")
    with pytest.raises(ValueError):
        tx.query(idx, "i0", 0.0)


def test_build_index_errors(small_texture_model):
    img = synthdata.natural_like_image(72, 0)
    with pytest.raises(ValueError):
        tx.build_index([], small_texture_model)
    with pytest.raises(ValueError):
        tx.build_index([("a", img, 0), ("b", img, 0)], small_texture_model)
    with pytest.raises(ValueError):
        tx.build_index([("a", img, 0), ("a", img, 1)], small_texture_model)


def test_same_class_gratings_correlate_higher(desk_texture_model):
    m = desk_texture_model
    g0 = synthdata.TextureSpec("grating", 0.0, 0.1, class_id=0)
    g90 = synthdata.TextureSpec("grating", np.pi / 2, 0.1, class_id=1)
    a, b = (tx.structure_feature(synthdata.render_texture(g0, 128, j, 0), m) for j in (0, 1))
    c = tx.structure_feature(synthdata.render_texture(g90, 128, 0, 0), m)
    assert spearman(a, b) > spearman(a, c)


def test_sweep_zero_row_matches_clean(small_texture_model):
    corpus = synthdata.texture_corpus(3, 2, 48, 0)
    clean = tx.evaluate_index(tx.build_index(corpus, small_texture_model))
    rows = tx.robustness_sweep(corpus, small_texture_model, [0, 30], seed=1)
    assert [r["sigma"] for r in rows] == [0, 30]
    assert {k: rows[0][k] for k in clean} == clean
    with pytest.raises(ValueError):
        tx.robustness_sweep(corpus, small_texture_model, [-1])


def test_noisy_corpus_is_seeded():
    corpus = synthdata.texture_corpus(2, 1, 32, 0)
    a = tx.noisy_corpus(corpus, 25, 3)
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, tx.noisy_corpus(corpus, 25, 3)))
    assert not np.array_equal(a[0][1], tx.noisy_corpus(corpus, 25, 4)[0][1])
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(corpus, tx.noisy_corpus(corpus, 0, 3)))


def test_load_corpus(tmp_path):
    manifest = synthdata.write_texture_corpus(tmp_path, n_classes=2, samples=2, size=32)
    corpus = tx.load_corpus(manifest)
    assert [lab for _, _, lab in corpus] == ["0", "0", "1", "1"]
    (tmp_path / "bad.tsv").write_text("only_one_field\n")
    with pytest.raises(ValueError):
        tx.load_corpus(tmp_path / "bad.tsv")


def test_prepare_curet(tmp_path):
    src = tmp_path / "curet"
    for cls in ("sample01", "sample02"):
        (src / cls).mkdir(parents=True)
        num = cls[-2:]
        save_image(src / cls / f"{num}-055.png", np.random.default_rng(int(num)).uniform(size=(300, 400, 3)))
        save_image(src / cls / f"{num}-012.png", np.zeros((300, 400, 3)))
    manifest = tx.prepare_curet(src, tmp_path / "out")
    lines = manifest.read_text().splitlines()
    assert len(lines) == 6
    assert lines[0] == "sample01_0.ppm\tsample01"
    patch = load_image(tmp_path / "out" / "sample01_1.ppm")
    full = load_image(src / "sample01" / "01-055.png")
    # 300x400 -> centred 256x384 grid, offsets (22, 8); patch 1 is row 0, column 1
    assert np.array_equal(patch, full[22:150, 8 + 128:8 + 256])
    with pytest.raises(FileNotFoundError):
        tx.prepare_curet(src, tmp_path / "o2", condition=99)
    with pytest.raises(ValueError):
        tx.prepare_curet(src, tmp_path / "o3", samples=7)


def test_upper_layers_respond_to_input(desk_texture_model):
    # rescaled layer inputs keep the final filters from shrinking to a constant map
    m = desk_texture_model
    corpus = synthdata.texture_corpus(4, 1, 128, 0)
    feats = np.array([tx.structure_feature(img, m) for _, img, _ in corpus])
    assert feats.std(axis=0).mean() > 1e-3
    assert m.p3_scale > 0 and m.final_scale > 0
