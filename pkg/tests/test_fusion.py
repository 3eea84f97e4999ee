import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from mmodom.fusion import (
    CROSS_SOURCES,
    MODALITIES,
    MaskNet,
    ModalityFeatures,
    apply_self,
    cross_mask,
    effective_mask,
    fuse,
    fuse_baseline,
    self_mask,
)
from oracles import mask_np

SIZES = {"I": 3, "M": 4, "V": 5}


def net(rng, n_in, n_out, scale=1.0):
    return MaskNet(
        torch.tensor(rng.normal(0, scale, (n_out, n_in))), torch.tensor(rng.normal(0, scale, n_out)),
        torch.tensor(rng.normal(0, scale, (n_out, n_out))), torch.tensor(rng.normal(0, scale, n_out)),
    )


def zero_net(n_in, n_out, b2=0.0):
    return MaskNet(torch.zeros(n_out, n_in), torch.zeros(n_out), torch.zeros(n_out, n_out), torch.full((n_out,), b2))


def feats(rng, batch=()):
    return ModalityFeatures(
        torch.tensor(rng.normal(size=(*batch, SIZES["M"]))),
        torch.tensor(rng.normal(size=(*batch, SIZES["V"]))),
        torch.tensor(rng.normal(size=(*batch, SIZES["I"]))),
    )


def two_stage_params(rng=None, zero=False):
    p = {}
    for k in MODALITIES:
        n = SIZES[k]
        n_cross = sum(SIZES[s] for s in CROSS_SOURCES[k])
        p[f"self_{k}"] = zero_net(n, n) if zero else net(rng, n, n)
        p[f"cross_{k}"] = zero_net(n_cross, n) if zero else net(rng, n_cross, n)
    return p


def as_np(n: MaskNet):
    return n.w1.numpy(), n.b1.numpy(), n.w2.numpy(), n.b2.numpy()


def test_self_mask_zero_params():
    a = self_mask(torch.randn(4), zero_net(4, 4))
    assert torch.all(a == 0.5)


def test_self_mask_saturates():
    a = self_mask(torch.randn(4), zero_net(4, 4, b2=20.0))
    np.testing.assert_allclose(a.numpy(), 1.0, atol=1e-8)


def test_self_mask_oracle(rng):
    n = net(rng, 4, 4)
    z = rng.normal(size=4)
    np.testing.assert_allclose(self_mask(torch.tensor(z), n).numpy(), mask_np(z, *as_np(n)), atol=1e-12)


def test_apply_self_cases():
    z = torch.tensor([1.0, -2.0, 3.0])
    assert torch.equal(apply_self(z, torch.ones(3)), z)
    assert torch.all(apply_self(z, torch.zeros(3)) == 0)
    assert torch.equal(apply_self(z, torch.full((3,), 0.5)), z / 2)
    with pytest.raises(ValueError):
        apply_self(z, torch.ones(4))


def test_cross_mask_zero_and_zero_inputs(rng):
    assert torch.all(cross_mask(torch.randn(3), torch.randn(5), zero_net(8, 4)) == 0.5)
    n = net(rng, 8, 4)
    got = cross_mask(torch.zeros(3), torch.zeros(5), n).numpy()
    w1, b1, w2, b2 = as_np(n)
    want = 1 / (1 + np.exp(-(w2 @ np.where(b1 > 0, b1, 0.01 * b1) + b2)))
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_cross_mask_oracle(rng):
    n = net(rng, 8, 4)
    x1, x2 = rng.normal(size=3), rng.normal(size=5)
    got = cross_mask(torch.tensor(x1), torch.tensor(x2), n).numpy()
    np.testing.assert_allclose(got, mask_np(np.concatenate([x1, x2]), *as_np(n)), atol=1e-12)


def test_fuse_zero_params_quarter(rng):
    m = feats(rng)
    fused, _ = fuse(m, two_stage_params(zero=True))
    want = 0.25 * torch.cat([m.z_I, m.z_M, m.z_V])
    assert torch.equal(fused, want)


def test_fuse_zero_visual_segment(rng):
    m = feats(rng)._replace(z_V=torch.zeros(SIZES["V"]))
    fused, _ = fuse(m, two_stage_params(rng))
    assert torch.all(fused[-SIZES["V"]:] == 0)


def test_fuse_equals_manual_composition(rng):
    m = feats(rng, (2,))
    p = two_stage_params(rng)
    fused, masks = fuse(m, p)
    tilde = {k: apply_self(m.get(k), self_mask(m.get(k), p[f"self_{k}"])) for k in MODALITIES}
    parts = []
    for k in MODALITIES:
        a, b = CROSS_SOURCES[k]
        parts.append(cross_mask(tilde[a], tilde[b], p[f"cross_{k}"]) * tilde[k])
    assert torch.equal(fused, torch.cat(parts, -1))
    for k in MODALITIES:
        assert torch.equal(effective_mask(masks, k), masks[f"self_{k}"] * masks[f"cross_{k}"])


@pytest.mark.parametrize("mode", ["masked", "raw"])
def test_fuse_numpy_oracle(rng, mode):
    m = feats(rng)
    p = two_stage_params(rng)
    z = {k: m.get(k).numpy() for k in MODALITIES}
    tl = {k: mask_np(z[k], *as_np(p[f"self_{k}"])) * z[k] for k in MODALITIES}
    src = tl if mode == "masked" else z
    want = np.concatenate(
        [mask_np(np.concatenate([src[a] for a in CROSS_SOURCES[k]]), *as_np(p[f"cross_{k}"])) * tl[k]
         for k in "IMV"]
    )
    fused, _ = fuse(m, p, mode)
    np.testing.assert_allclose(fused.numpy(), want, atol=1e-12)


def test_fuse_bad_mode(rng):
    with pytest.raises(ValueError):
        fuse(feats(rng), two_stage_params(zero=True), "both")


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_masks_in_unit_interval_and_fused_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    m = ModalityFeatures(*(torch.tensor(rng.normal(0, scale, SIZES[k])) for k in "MVI"))
    p = two_stage_params(rng)
    fused, masks = fuse(m, p)
    for a in masks.values():
        assert torch.all((a >= 0) & (a <= 1))
    z = torch.cat([m.z_I, m.z_M, m.z_V])
    assert torch.all(fused.abs() <= z.abs())


def test_baseline_zero_params_half(rng):
    m = feats(rng)
    n = sum(SIZES.values())
    p = {f"soft_{k}": zero_net(n, SIZES[k]) for k in MODALITIES}
    fused, masks = fuse_baseline(m, p)
    assert torch.equal(fused, 0.5 * torch.cat([m.z_I, m.z_M, m.z_V]))
    assert set(masks) == {"soft_I", "soft_M", "soft_V"}


def test_baseline_saturated_is_identity(rng):
    m = feats(rng)
    n = sum(SIZES.values())
    p = {f"soft_{k}": zero_net(n, SIZES[k], b2=40.0) for k in MODALITIES}
    fused, _ = fuse_baseline(m, p)
    np.testing.assert_allclose(fused.numpy(), torch.cat([m.z_I, m.z_M, m.z_V]).numpy(), atol=1e-12)


def test_baseline_oracle(rng):
    m = feats(rng)
    n = sum(SIZES.values())
    p = {f"soft_{k}": net(rng, n, SIZES[k]) for k in MODALITIES}
    cat = torch.cat([m.z_I, m.z_M, m.z_V]).numpy()
    want = np.concatenate([mask_np(cat, *as_np(p[f"soft_{k}"])) * m.get(k).numpy() for k in "IMV"])
    np.testing.assert_allclose(fuse_baseline(m, p)[0].numpy(), want, atol=1e-12)


def test_mask_net_shape_errors():
    with pytest.raises(ValueError):
        zero_net(4, 4)(torch.zeros(5))
    with pytest.raises(ValueError):
        self_mask(torch.zeros(4), zero_net(4, 3))
