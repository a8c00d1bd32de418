import numpy as np
import pytest

from gnl.errors import ConfigError, NumericError
from gnl.losses import LossWeights
from gnl.training import AdamState, TrainConfig, TrainLog, adam_update, loss_and_grads, train, train_step

from conftest import random_images


def test_adam_first_step_oracle():
    # first step: m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps)
    p = {"w": np.array([0.0, 1.0])}
    g = {"w": np.array([2.0, -0.5])}
    new, state = adam_update(p, g, AdamState(), lr=0.1, betas=(0.5, 0.999), eps=0.0)
    np.testing.assert_allclose(new["w"], [-0.1, 1.1], rtol=1e-15)
    assert state.step == 1
    np.testing.assert_allclose(state.m["w"], [1.0, -0.25])
    np.testing.assert_allclose(state.v["w"], [0.004, 0.00025])


def test_adam_second_step():
    p = {"w": np.array([1.0])}
    g1, g2 = np.array([1.0]), np.array([3.0])
    p1, s = adam_update(p, {"w": g1}, AdamState(), 0.01, (0.5, 0.999), 1e-8)
    p2, s = adam_update(p1, {"w": g2}, s, 0.01, (0.5, 0.999), 1e-8)
    m = 0.5 * (0.5 * g1) + 0.5 * g2
    v = 0.999 * (0.001 * g1 ** 2) + 0.001 * g2 ** 2
    step = 0.01 * (m / 0.75) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    np.testing.assert_allclose(p2["w"], p1["w"] - step, rtol=1e-14)


@pytest.mark.parametrize("kwargs", [dict(batch_size=0), dict(learning_rate=0), dict(n_augments=0),
                                    dict(adam_betas=(1.0, 0.9)), dict(epochs=0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_config_roundtrip():
    cfg = TrainConfig(epochs=3, weights=LossWeights(1, 0.5, 0), seed=7)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_step_freezes_teacher_and_moves_student(tiny_bundle):
    teacher_before = {k: v.copy() for k, v in tiny_bundle.teacher.items()}
    cfg = TrainConfig(batch_size=2)
    new, state, rep = train_step(random_images(2), tiny_bundle, cfg, AdamState(), np.random.default_rng(0))
    assert all(np.array_equal(new.teacher[k], teacher_before[k]) for k in teacher_before)
    assert new.teacher is tiny_bundle.teacher
    assert any(not np.array_equal(new.decoder[k], tiny_bundle.decoder[k]) for k in new.decoder)
    assert state.step == 1 and rep.l_abs > 0 and rep.l_lowf > 0


def test_plain_objective_consumes_no_augmentation_draws(tiny_bundle):
    cfg = TrainConfig(weights=LossWeights(1, 0, 0))
    r = np.random.default_rng(0)
    before = r.bit_generator.state
    train_step(random_images(2), tiny_bundle, cfg, AdamState(), r)
    assert r.bit_generator.state == before


def test_nan_input_raises_numeric_error(tiny_bundle):
    x = random_images(2)
    x[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        train_step(x, tiny_bundle, TrainConfig(weights=LossWeights(1, 0, 0)), AdamState(),
                   np.random.default_rng(0))


def test_zero_loss_fixed_point(tiny_bundle64):
    x = random_images(2).astype(np.float64)
    rep, _ = loss_and_grads(x, [x.copy(), x.copy()], tiny_bundle64, LossWeights())
    assert abs(rep.l_abs) < 1e-12 and abs(rep.l_lowf) < 1e-12


def test_train_loop_log_and_meta(tiny_bundle, tmp_path):
    data = list(random_images(5, seed=3))
    cfg = TrainConfig(epochs=2, batch_size=2, seed=4)
    b, tlog = train(data, cfg, tiny_bundle)
    assert len(tlog.rows) == 2 and b.meta["steps"] == 6 and b.meta["seed"] == 4
    tlog.to_csv(tmp_path / "log.csv")
    header = (tmp_path / "log.csv").read_text().splitlines()[0]
    assert header == "epoch,l_ori,l_abs,l_lowf,total,wall_time"
    b2, tlog2 = train(data, cfg, tiny_bundle)
    assert tlog.totals() == tlog2.totals()
    assert all(np.array_equal(b.decoder[k], b2.decoder[k]) for k in b.decoder)


def test_train_empty_dataset(tiny_bundle):
    with pytest.raises(ConfigError):
        train([], TrainConfig(), tiny_bundle)


def test_trainlog_totals():
    from gnl.losses import LossReport
    t = TrainLog()
    t.append(1, LossReport(1, 2, 3, 6), 0.1)
    assert t.totals() == [6]
