"""End-to-end smoke tests for the python bindings."""

import numpy as np
import pytest

import codir


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    cfg = codir.RunConfig()
    cfg.n_classes = 2
    cfg.n_context = 12
    cfg.height = 8
    cfg.width = 8
    cfg.n_train = 96
    cfg.n_val = 24
    cfg.n_test = 48
    cfg.n_envs = 3
    cfg.max_labels = 2
    cfg.batch_size = 32
    cfg.epochs = 1
    cfg.seed = 5
    cfg.validate()

    run = tmp_path_factory.mktemp("run")
    codir.gen(cfg, run)
    codir.train(cfg, run)
    codir.fit(cfg, run)
    codir.dump_reps(cfg, run)
    return cfg, run


def test_config_round_trip():
    cfg = codir.RunConfig()
    cfg.n_envs = 7
    assert codir.parse_config(cfg.echo()) == cfg
    with pytest.raises(codir.ConfigError):
        codir.parse_config("not_a_key = 1")


def test_dependency_error(tmp_path):
    with pytest.raises(codir.DependencyError):
        codir.eval(codir.RunConfig(), tmp_path / "empty")


def test_pipeline_eval(tiny_run):
    cfg, run = tiny_run
    report = codir.eval(cfg, run)
    assert 0.0 <= report.f1 <= 1.0
    assert 0.0 <= report.precision <= 1.0


def test_reps_and_classify(tiny_run):
    cfg, run = tiny_run
    ts = codir.read_templates(run / "templates.cdts")
    reps = codir.read_reps(run / "reps.cdrep")
    assert len(reps) == cfg.n_test
    d = reps[0].d
    assert d.shape == (cfg.n_classes, cfg.n_envs)
    predicted = codir.classify(d, ts)
    assert all(0 <= c < cfg.n_classes for c in predicted)
    assert codir.similarity(d, d, ts) == pytest.approx(1.0)


def test_svd_matches_numpy():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(6, 9))
    u, s, v = codir.svd(m)
    assert np.allclose(u @ np.diag(s) @ v, m, atol=1e-10)
    assert np.allclose(s, np.linalg.svd(m, compute_uv=False), atol=1e-10)


def test_compress_decompress():
    rng = np.random.default_rng(4)
    m = rng.normal(size=(4, 7))
    u, s, v = codir.compress(m, 2)
    assert u.shape == (4, 2) and len(s) == 2 and v.shape == (2, 7)
    back = codir.decompress(u, s, v)
    exact = codir.decompress(*codir.compress(m, 4))
    assert np.allclose(exact, m, atol=1e-10)
    assert np.linalg.norm(back - m) <= np.linalg.norm(exact - m) + np.linalg.norm(m)
    assert codir.compression_ratio(91, 300, 1) == pytest.approx(391 / 27300)


def test_representation_rank():
    rng = np.random.default_rng(5)
    base = rng.normal(size=(3, 8))
    reps = [c * base for c in rng.normal(size=20)]
    assert codir.representation_rank(reps, 3, 8) == 1


def test_compose_swap(tiny_run):
    cfg, run = tiny_run
    ts = codir.read_templates(run / "templates.cdts")
    reps = codir.read_reps(run / "reps.cdrep")
    d = reps[0].d
    swapped = codir.compose_swap(d, 0, 1, ts, [0])
    assert swapped.shape == d.shape
    with pytest.raises(Exception):
        codir.compose_swap(d, 0, 1, ts, [1])  # c_plus not predicted
