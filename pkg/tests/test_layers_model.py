import struct

import numpy as np
import pytest

from gnl import layers
from gnl.errors import ConfigError, FormatError, ShapeError
from gnl.model import (ModelConfig, decode, encode, forward, init_model, load_checkpoint,
                       load_teacher_weights, read_checkpoint, save_checkpoint)

from conftest import random_images


def naive_conv(x, w, stride, pad):
    b, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = (h + 2 * pad - k) // stride + 1, (wd + 2 * pad - k) // stride + 1
    out = np.zeros((b, o, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * stride:i * stride + k, j * stride:j * stride + k]
            out[:, :, i, j] = np.einsum("bckl,ockl->bo", patch, w)
    return out


@pytest.mark.parametrize("stride,pad,k", [(1, 1, 3), (2, 1, 3), (4, 0, 4), (1, 0, 1)])
def test_conv_matches_loop_reference(stride, pad, k):
    r = np.random.default_rng(0)
    x = r.normal(size=(2, 3, 8, 8))
    w = r.normal(size=(5, 3, k, k))
    out, _ = layers.conv2d_forward(x, w, stride, pad)
    np.testing.assert_allclose(out, naive_conv(x, w, stride, pad), rtol=1e-12, atol=1e-12)


def test_conv_backward_matches_finite_difference():
    r = np.random.default_rng(1)
    x = r.normal(size=(1, 2, 6, 6))
    w = r.normal(size=(3, 2, 3, 3))
    dout = r.normal(size=(1, 3, 3, 3))
    _, cache = layers.conv2d_forward(x, w, 2, 1)
    dx, dw = layers.conv2d_backward(dout, cache)
    h = 1e-6
    for arr, grad in ((x, dx), (w, dw)):
        idx = (0, 1, 2, 2)
        arr[idx] += h
        up = np.sum(layers.conv2d_forward(x, w, 2, 1)[0] * dout)
        arr[idx] -= 2 * h
        dn = np.sum(layers.conv2d_forward(x, w, 2, 1)[0] * dout)
        arr[idx] += h
        assert abs((up - dn) / (2 * h) - grad[idx]) < 1e-6


def test_upsample_backward_is_adjoint():
    r = np.random.default_rng(2)
    x, y = r.normal(size=(1, 2, 3, 3)), r.normal(size=(1, 2, 6, 6))
    assert np.isclose(np.sum(layers.upsample2_forward(x) * y), np.sum(x * layers.upsample2_backward(y)))


def test_pyramid_shapes(tiny_bundle):
    pyr, rec = forward(random_images(1)[0], tiny_bundle)
    assert pyr.p1.shape == (4, 8, 8) and pyr.p2.shape == (8, 4, 4) and pyr.p3.shape == (16, 2, 2)
    assert pyr.bn.shape == (8, 2, 2)
    assert [a.shape for a in rec] == [p.shape for p in pyr[:3]]


def test_default_model_shapes():
    b = init_model(ModelConfig())
    p1, p2, p3 = encode(random_images(2, 64), b)
    assert p1.shape == (2, 16, 16, 16) and p2.shape == (2, 32, 8, 8) and p3.shape == (2, 64, 4, 4)


def test_forward_deterministic_and_batch_consistent(tiny_bundle):
    x = random_images(3)
    a = encode(x, tiny_bundle)
    b = encode(x, tiny_bundle)
    single = encode(x[1], tiny_bundle)
    for u, v, s in zip(a, b, single):
        assert np.array_equal(u, v)
        assert np.array_equal(u[1], s)


def test_init_is_seeded():
    a = init_model(ModelConfig(block_channels=(4, 8, 16), bottleneck_channels=8, seed=1))
    b = init_model(ModelConfig(block_channels=(4, 8, 16), bottleneck_channels=8, seed=1))
    c = init_model(ModelConfig(block_channels=(4, 8, 16), bottleneck_channels=8, seed=2))
    assert all(np.array_equal(a.teacher[k], b.teacher[k]) for k in a.teacher)
    assert not all(np.array_equal(a.teacher[k], c.teacher[k]) for k in a.teacher)


def test_teacher_is_read_only(tiny_bundle):
    w = next(iter(tiny_bundle.teacher.values()))
    with pytest.raises(ValueError):
        w[...] = 0


@pytest.mark.parametrize("kwargs", [dict(block_channels=(8, 8, 16)), dict(block_channels=(4, 8)),
                                    dict(in_channels=0), dict(bottleneck_channels=0)])
def test_bad_model_config(kwargs):
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)


@pytest.mark.parametrize("shape", [(3, 30, 32), (1, 32, 32), (2, 3, 32)])
def test_bad_image_shapes(tiny_bundle, shape):
    with pytest.raises(ShapeError):
        encode(np.zeros(shape, np.float32), tiny_bundle)


def test_decode_rejects_wrong_bottleneck(tiny_bundle):
    with pytest.raises(ShapeError):
        decode(np.zeros((5, 2, 2), np.float32), tiny_bundle)


def test_checkpoint_roundtrip(tmp_path, tiny_bundle):
    p = tmp_path / "m.gnl"
    save_checkpoint(tiny_bundle, p, run_config={"seed": 3})
    b2, header = read_checkpoint(p)
    assert header["run_config"] == {"seed": 3}
    assert b2.config == tiny_bundle.config
    for group in ("teacher", "bottleneck", "decoder"):
        src, dst = getattr(tiny_bundle, group), getattr(b2, group)
        assert src.keys() == dst.keys()
        assert all(np.array_equal(src[k], dst[k]) for k in src)
    x = random_images(1)[0]
    for a, b in zip(forward(x, tiny_bundle)[1], forward(x, b2)[1]):
        assert np.array_equal(a, b)
    save_checkpoint(b2, tmp_path / "again.gnl", run_config={"seed": 3})
    assert (tmp_path / "again.gnl").read_bytes() == p.read_bytes()


def test_checkpoint_bad_magic_and_truncation(tmp_path, tiny_bundle):
    p = tmp_path / "m.gnl"
    save_checkpoint(tiny_bundle, p)
    data = p.read_bytes()
    (tmp_path / "magic.gnl").write_bytes(b"XXXX" + data[4:])
    (tmp_path / "short.gnl").write_bytes(data[:-7])
    (tmp_path / "hdr.gnl").write_bytes(data[:4] + struct.pack("<I", 10 ** 6) + data[8:40])
    for name in ("magic.gnl", "short.gnl", "hdr.gnl"):
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / name)


def test_load_teacher_weights(tmp_path, tiny_bundle):
    other = init_model(ModelConfig(block_channels=(4, 8, 16), bottleneck_channels=8, seed=99))
    save_checkpoint(other, tmp_path / "t.gnl")
    b = load_teacher_weights(tiny_bundle, tmp_path / "t.gnl")
    assert all(np.array_equal(b.teacher[k], other.teacher[k]) for k in b.teacher)
    assert all(np.array_equal(b.decoder[k], tiny_bundle.decoder[k]) for k in b.decoder)
    wrong = init_model(ModelConfig(block_channels=(4, 8, 32), bottleneck_channels=8))
    save_checkpoint(wrong, tmp_path / "w.gnl")
    with pytest.raises(FormatError):
        load_teacher_weights(tiny_bundle, tmp_path / "w.gnl")
