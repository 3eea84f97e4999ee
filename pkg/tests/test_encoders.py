import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from mmodom.encoders import LstmParams, imu_encode, lstm_step, visual_encode
from oracles import leaky, lstm_scalar


def params(rng, n_in, H, scale=0.5):
    return LstmParams(
        torch.tensor(rng.normal(0, scale, (4 * H, n_in + H))), torch.tensor(rng.normal(0, scale, 4 * H))
    )


def test_zero_lstm_outputs_zero():
    p = LstmParams(torch.zeros(12, 6), torch.zeros(12))
    h, c = lstm_step(torch.ones(3), torch.zeros(3), torch.zeros(3), p)
    assert torch.all(h == 0) and torch.all(c == 0)


def test_saturated_gates_carry_cell():
    H = 2
    b = torch.tensor([-50.0] * H + [50.0] * H + [0.0] * H + [50.0] * H)
    p = LstmParams(torch.zeros(4 * H, 3 + H), b)
    c_prev = torch.tensor([0.3, -0.7])
    h, c = lstm_step(torch.ones(3), torch.zeros(H), c_prev, p)
    np.testing.assert_allclose(c.numpy(), c_prev.numpy(), atol=1e-12)
    np.testing.assert_allclose(h.numpy(), np.tanh(c_prev.numpy()), atol=1e-12)


def test_lstm_matches_scalar_oracle(rng):
    p = params(rng, 5, 4)
    x, h0, c0 = rng.normal(size=5), rng.normal(size=4) * 0.5, rng.normal(size=4)
    h, c = lstm_step(torch.tensor(x), torch.tensor(h0), torch.tensor(c0), p)
    he, ce = lstm_scalar(x, h0, c0, p.weight.numpy(), p.bias.numpy())
    np.testing.assert_allclose(h.numpy(), he, atol=1e-12)
    np.testing.assert_allclose(c.numpy(), ce, atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 20.0))
def test_hidden_state_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    p = params(rng, 3, 5, scale)
    h, c = lstm_step(torch.tensor(rng.normal(size=3) * scale), torch.zeros(5), torch.zeros(5), p)
    assert torch.all(h.abs() <= 1.0)


def test_contraction_without_input_gate(rng):
    H = 4
    b = torch.tensor([-40.0] * H + [0.0] * H + list(rng.normal(size=2 * H)))
    W = torch.zeros(4 * H, 2 + H)
    p = LstmParams(W, b)
    c_prev = torch.tensor(rng.normal(size=H))
    _, c = lstm_step(torch.zeros(2), torch.zeros(H), c_prev, p)
    # forget gate 0.5 < 1, input gate ~0
    assert c.norm() < c_prev.norm()


def test_lstm_shape_mismatch():
    p = LstmParams(torch.zeros(8, 5), torch.zeros(8))
    with pytest.raises(ValueError):
        lstm_step(torch.zeros(4), torch.zeros(2), torch.zeros(2), p)
    with pytest.raises(ValueError):
        LstmParams(torch.zeros(8, 5), torch.zeros(7))


def test_imu_zero_weights():
    p = LstmParams(torch.zeros(16, 10), torch.zeros(16))
    assert torch.all(imu_encode(torch.randn(48, 6), p) == 0)


def test_imu_matches_unrolled_oracle(rng):
    p = params(rng, 6, 3)
    win = rng.normal(size=(48, 6))
    h, c = np.zeros(3), np.zeros(3)
    for t in range(48):
        h, c = lstm_scalar(win[t], h, c, p.weight.numpy(), p.bias.numpy())
    np.testing.assert_allclose(imu_encode(torch.tensor(win), p).numpy(), h, atol=1e-12)


def test_imu_order_sensitive(rng):
    p = params(rng, 6, 8)
    win = torch.tensor(rng.normal(size=(48, 6)))
    z = imu_encode(win, p)
    assert not torch.allclose(imu_encode(win.flip(0), p), z)
    perm = torch.cat([torch.randperm(47, generator=torch.Generator().manual_seed(1)), torch.tensor([47])])
    assert not torch.allclose(imu_encode(win[perm], p), z)


def test_imu_recency(rng):
    p = params(rng, 6, 8)
    early, late = torch.zeros(48, 6), torch.zeros(48, 6)
    early[0] = 1.0
    late[47] = 1.0
    assert not torch.allclose(imu_encode(early, p), imu_encode(late, p))


def test_imu_batched_equals_single(rng):
    p = params(rng, 6, 4)
    wins = torch.tensor(rng.normal(size=(3, 2, 48, 6)))
    batched = imu_encode(wins, p)
    for i in range(3):
        for j in range(2):
            torch.testing.assert_close(batched[i, j], imu_encode(wins[i, j], p), rtol=0, atol=1e-14)


def test_imu_wrong_rows():
    p = LstmParams(torch.zeros(16, 10), torch.zeros(16))
    with pytest.raises(ValueError):
        imu_encode(torch.zeros(47, 6), p)


def test_visual_identical_images_give_bias_only(rng):
    img = torch.tensor(rng.random((4, 4)))
    W = torch.tensor(rng.normal(size=(3, 16)))
    b = torch.tensor([1.0, -2.0, 0.0])
    np.testing.assert_array_equal(visual_encode(img, img, W, b).numpy(), leaky(b.numpy()))
    assert torch.all(visual_encode(img, img, W, torch.zeros(3)) == 0)


@pytest.mark.parametrize("c", [0.1, 0.5, 2.0])
def test_visual_row_sum_extractor(c):
    W = torch.ones(1, 16)
    z = visual_encode(torch.zeros(4, 4), torch.full((4, 4), c), W, torch.zeros(1))
    assert z.item() == pytest.approx(16 * c, abs=1e-12)


def test_visual_matches_numpy(rng):
    a, b = rng.random((6, 5)), rng.random((6, 5))
    W, bias = rng.normal(size=(7, 30)), rng.normal(size=7)
    got = visual_encode(torch.tensor(a), torch.tensor(b), torch.tensor(W), torch.tensor(bias)).numpy()
    want = leaky(W @ (b - a).reshape(-1) + bias)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_visual_shape_mismatch():
    with pytest.raises(ValueError):
        visual_encode(torch.zeros(4, 4), torch.zeros(4, 5), torch.zeros(2, 16), torch.zeros(2))
    with pytest.raises(ValueError):
        visual_encode(torch.zeros(4, 4), torch.zeros(4, 4), torch.zeros(2, 15), torch.zeros(2))


@given(st.integers(0, 2**31 - 1))
def test_encoders_finite(seed):
    rng = np.random.default_rng(seed)
    p = params(rng, 6, 4, 3.0)
    assert torch.isfinite(imu_encode(torch.tensor(rng.normal(0, 50, (48, 6))), p)).all()
    z = visual_encode(torch.tensor(rng.random((4, 4))), torch.tensor(rng.random((4, 4))),
                      torch.tensor(rng.normal(size=(3, 16))), torch.zeros(3))
    assert torch.isfinite(z).all()
