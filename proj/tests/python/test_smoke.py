import numpy as np
import pytest

import genshin


@pytest.fixture(scope="module")
def toy():
    raw = genshin.generate_synthetic(8, 200, period=24, noise=0.3, seed=1)
    data = genshin.make_windows(raw, 3, 3)
    cfg = genshin.ModelConfig.toy()
    cfg.epochs = 2
    cfg.batch_size = 32
    return raw, data, cfg


def test_config_presets():
    ref = genshin.ModelConfig.reference()
    assert ref.hidden_dim == 128
    assert ref.n_prototypes == 20
    cfg = genshin.ModelConfig.parse(genshin.ModelConfig.toy().format())
    assert cfg.format() == genshin.ModelConfig.toy().format()
    with pytest.raises(genshin.ConfigError):
        genshin.ModelConfig.parse("hidden_dim = 7\nn_heads = 2\n")


def test_synthetic_dataset(toy):
    raw, data, _ = toy
    assert raw.values.shape == (200, 8, 1)
    assert raw.adjacency.shape == (8, 8)
    batch = data.train.batch([0, 1])
    assert batch["x"].shape == (2, 3, 8, 1)
    assert batch["y_raw"].shape == (2, 3, 8, 1)


def test_predict_shapes_and_determinism(toy):
    _, data, cfg = toy
    model = genshin.Model(cfg, data)
    x = data.test.batch([0, 1, 2])["x"]
    a = model.predict(x)["y"]
    b = model.predict(x)["y"]
    assert a.shape == (3, 3, 8, 1)
    assert np.array_equal(a, b)

    diag = model.predict(x, diagnostics=True)
    assert diag["memory_scores"].shape == (3, 8, cfg.n_prototypes)
    assert len(diag["dynamic_graphs"]) == cfg.horizon
    for g in diag["dynamic_graphs"]:
        np.testing.assert_allclose(g.sum(axis=-1), 1.0, atol=1e-9)


def test_node_mismatch_rejected(toy):
    _, data, cfg = toy
    model = genshin.Model(cfg, data)
    with pytest.raises(genshin.ShapeError):
        model.predict(np.zeros((1, 3, 5, 1)))


def test_graphs_are_row_stochastic(toy):
    _, data, cfg = toy
    graphs = genshin.Model(cfg, data).graphs()
    for key in ("tilde1", "tilde2", "a1", "a2"):
        np.testing.assert_allclose(graphs[key].sum(axis=1), 1.0, atol=1e-9)
    assert np.array_equal(graphs["score2"], graphs["score1"].T)


def test_fit_save_load_round_trip(toy, tmp_path):
    _, data, cfg = toy
    model = genshin.Model(cfg, data)
    seen = []
    report = genshin.fit(model, data, checkpoint_dir=tmp_path / "ckpt", on_epoch=lambda e, loss, val: seen.append(e))
    assert seen == [1, 2]
    assert len(report["history"]) == 2
    assert np.isfinite(report["test"]["normalized_mae"])

    loaded = genshin.Model.load(tmp_path / "ckpt")
    x = data.test.all()["x"]
    assert np.array_equal(model.predict(x)["y"], loaded.predict(x)["y"])

    flags = genshin.AblationFlags()
    flags.no_memory = True
    with pytest.raises(genshin.CheckpointError):
        genshin.Model.load(tmp_path / "ckpt", expected_flags=flags)


def test_metrics_against_numpy():
    rng = np.random.default_rng(0)
    y = rng.uniform(1, 50, size=(2, 3, 4, 1))
    y[0, 0, 0, 0] = 0.0
    y_hat = y + rng.normal(size=y.shape)
    report = genshin.compute_metrics(y_hat, y)
    mask = y != 0
    err = (y_hat - y)[mask]
    assert report["overall"]["mae"] == pytest.approx(np.abs(err).mean(), abs=1e-12)
    assert report["overall"]["rmse"] == pytest.approx(np.sqrt((err**2).mean()), abs=1e-12)
    assert report["overall"]["mape"] == pytest.approx(100 * np.abs(err / y[mask]).mean(), abs=1e-10)
    assert report["overall"]["count"] == mask.sum()
    assert len(report["per_horizon"]) == 3


def test_historical_average_periodic():
    train = np.tile(np.array([10.0, 20.0]), 5).reshape(10, 1, 1)
    pred = genshin.historical_average(train, [10, 11], 2, 2)
    assert pred[:, :, 0, 0].tolist() == [[10.0, 20.0], [20.0, 10.0]]


def test_grad_check_subset():
    report = genshin.grad_check(genshin.ModelConfig.toy(), first_n=2)
    assert report["checked"] > 0
    assert report["max_abs_diff"] < 1e-9
