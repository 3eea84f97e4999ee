"""Finite-difference gradient harnesses shared by the unit and acceptance tests."""
import torch

from mmodom.encoders import LstmParams, imu_encode, visual_encode
from mmodom.fusion import ModalityFeatures, fuse, fuse_baseline
from mmodom.head import PoseHeadParams, PoseWeights, pose_regress, temporal_step, weighted_mse
from mmodom.learn import FrameBatch, ModelConfig, forward, init_params
from mmodom.learn.model import fusion_view
from mmodom.radar import build_delta_matrix, radar_encode, softmax_match
from mmodom.synthsim import rng_stream
from oracles import gradient_check

GRAD_TOL = 1e-4


def batch_of(scene, n=None, dtype=torch.float64):
    b = FrameBatch.from_arrays(scene.stack(), dtype)
    return b if n is None else b.slice(0, n)


def model_params(cfg, seed=0):
    return init_params(cfg, rng_stream(seed, "init"))


def full_model_errors(cfg, scene, n_frames=3):
    """FD check of every parameter tensor of the composed model."""
    b = batch_of(scene, n_frames)
    params = model_params(cfg)
    names = list(params)
    w = PoseWeights()

    def loss(ts):
        return forward(dict(zip(names, ts)), b, cfg, w, check=False).loss

    return dict(zip(names, gradient_check(loss, list(params.values()))))


def module_errors(rng, n=16, d=8, f=16, hidden=32, img=(8, 8)):
    """FD check of each module on its own, inputs included where differentiable."""
    T = lambda *s: torch.tensor(rng.normal(size=s))
    probe = lambda k: T(k)
    out = {}

    kp0 = torch.cat([T(n, 2) * 5, torch.ones(n, 1), torch.nn.functional.normalize(T(n, d), dim=-1)], -1)
    kp1 = kp0.clone()
    kp1[:, :2] += T(n, 2)
    pr = probe(f)

    def radar(ts):
        a = torch.cat([ts[0], kp0[:, 2:]], -1)
        bb = torch.cat([ts[1], kp1[:, 2:]], -1)
        delta = build_delta_matrix(a, bb, softmax_match(a, bb, 0.5))
        return (radar_encode(delta, ts[2], ts[3]) * pr).sum()

    out["radar"] = gradient_check(radar, [kp0[:, :2], kp1[:, :2], T(f, 4 * n) * 0.2, T(f)])

    win = T(48, 6)

    def imu(ts):
        return (imu_encode(ts[2], LstmParams(ts[0], ts[1])) * probe_i).sum()

    probe_i = probe(f)
    out["imu"] = gradient_check(imu, [T(4 * f, 6 + f) * 0.3, T(4 * f) * 0.3, win])

    pv = probe(f)

    def visual(ts):
        return (visual_encode(ts[0], ts[1], ts[2], ts[3]) * pv).sum()

    out["visual"] = gradient_check(visual, [T(*img), T(*img), T(f, img[0] * img[1]) * 0.2, T(f)])

    for mode in ("two_stage", "baseline"):
        mc = ModelConfig(n_keypoints=n, desc_dim=d, image_size=img, f_radar=f, f_visual=f, f_imu=f,
                         hidden=hidden, fusion_mode=mode)
        fp = {k: v for k, v in model_params(mc).items() if k.startswith("fusion.")}
        fnames = list(fp)
        pf = probe(3 * f)

        def fusion(ts):
            p = dict(zip(fnames, ts[3:]))
            feats = ModalityFeatures(ts[0], ts[1], ts[2])
            fv = fusion_view(p, mc)
            fused = fuse_baseline(feats, fv)[0] if mode == "baseline" else fuse(feats, fv)[0]
            return (fused * pf).sum()

        out[f"fusion_{mode}"] = gradient_check(fusion, [T(f), T(f), T(f), *fp.values()])

    x1, x2, truth = T(3 * f), T(3 * f), T(6)
    w = PoseWeights()

    def head(ts):
        core = LstmParams(ts[0], ts[1])
        h0 = (torch.zeros(hidden, dtype=torch.float64),) * 2
        state, _ = temporal_step(x1, h0, core)
        _, h2 = temporal_step(x2, state, core)
        pose = pose_regress(h2, PoseHeadParams(*ts[2:6]))
        return weighted_mse(pose, truth, w)

    out["head"] = gradient_check(
        head,
        [T(4 * hidden, 3 * f + hidden) * 0.1, T(4 * hidden) * 0.1, T(hidden, hidden) * 0.2, T(hidden) * 0.2,
         T(6, hidden) * 0.2, T(6) * 0.2],
    )
    return out
