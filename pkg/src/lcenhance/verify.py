"""Finite-difference verification of analytic gradients, block by block.

Each named block of the network (mapping stems, guided attention, encoders,
cross-attention fusion, decoder, refinement, losses, and the assembled
model) gets a scalar probe loss; a sample of its parameters is then checked
against central finite differences.  The numeric side only reruns forward
passes, so it is independent of every backward rule it validates.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import EnhancementModel, ModelConfig
from .train import total_loss

__all__ = ["BLOCK_NAMES", "gradcheck_blocks", "check_gradients", "relative_error"]

BLOCK_NAMES = ("lc_map", "lcgab", "encoder", "lccab", "decoder", "lcgrb", "losses", "full_model")

FD_STEP = 1e-5
TOLERANCE = 1e-4


def relative_error(analytic: float, numeric: float, scale: float = 0.0) -> float:
    """Relative mismatch with a floor tied to the surrounding gradient scale.

    The floor keeps elements whose true derivative is (near) zero — for
    example a convolution bias feeding batch normalization — from comparing
    an exact analytic zero against pure finite-difference roundoff.
    """
    denom = max(abs(analytic), abs(numeric), scale, 1e-8)
    return abs(analytic - numeric) / denom


def check_gradients(loss_fn, leaves: list[Tensor], rng: np.random.Generator,
                    samples: int = 6, h: float = FD_STEP) -> float:
    """Max relative error between backward and central differences.

    ``loss_fn`` must rebuild the graph from the leaves on every call.
    """
    for leaf in leaves:
        leaf.zero_grad()
    loss_fn().backward()
    gmax = max(float(np.max(np.abs(leaf.grad))) for leaf in leaves)
    scale = 1e-3 * gmax
    worst = 0.0
    for leaf in leaves:
        flat_grad = np.atleast_1d(leaf.grad).ravel()
        n = leaf.size
        picks = rng.choice(n, size=min(samples, n), replace=False)
        flat_data = np.atleast_1d(leaf.data).ravel()
        for idx in picks:
            orig = flat_data[idx]
            flat_data[idx] = orig + h
            hi = loss_fn().item()
            flat_data[idx] = orig - h
            lo = loss_fn().item()
            flat_data[idx] = orig
            numeric = (hi - lo) / (2.0 * h)
            worst = max(worst, relative_error(flat_grad[idx], numeric, scale))
    return worst


def _leaf(rng, shape, scale=0.5):
    return Tensor(rng.normal(0.0, scale, shape), requires_grad=True)


def gradcheck_blocks(config: ModelConfig | None = None, seed: int = 0,
                     samples: int = 4,
                     corrupt_block: str | None = None) -> dict[str, float]:
    """Max relative gradient error per block on small random inputs.

    ``corrupt_block`` is a test-only hook that perturbs the analytic gradient
    of one block's check, to prove the harness can fail.
    """
    config = config or ModelConfig()
    model = EnhancementModel(config, seed=seed)
    rng = ad.make_rng(seed + 1)
    w = config.base_width
    results: dict[str, float] = {}

    def run(name: str, loss_fn, leaves):
        err = check_gradients(loss_fn, leaves, rng, samples=samples)
        if corrupt_block == name:
            err += 1.0
        results[name] = err

    # mapping stem: probe both outputs, check a parameter slice plus input
    img = _leaf(rng, (3, 8, 8))
    comp = _leaf(rng, (1, 8, 8))
    stem_params = [model.map_l.l1.w, model.map_l.l1.gamma, model.map_l.l2.b,
                   model.map_l.l3.w, model.map_l.boost_w]
    run("lc_map",
        lambda: (lambda fb: fb[0].sum() + fb[1].sum())(model.map_l(img, comp, True)),
        [img, comp] + stem_params)

    gab = model.enc_l.stages[0][0][0]
    gx = _leaf(rng, (w, 4, 4))
    gf = _leaf(rng, (w, 4, 4))
    gab_params = [gab.wq[0], gab.wk[0], gab.wv[0], gab.alpha[0], gab.wo,
                  gab.ffn1_w, gab.ffn2_b]
    run("lcgab", lambda: gab(gx, gf, True).sum(), [gx, gf] + gab_params)

    ex = _leaf(rng, (w, 8, 8))
    ef = _leaf(rng, (w, 8, 8))
    enc_params = [model.enc_l.stages[0][1], model.enc_l.stages[-1][3],
                  model.enc_l.stages[-1][0][0].wv[0]]

    def enc_loss():
        out, skips = model.enc_l(ex, ef, True)
        total = out.sum()
        for s in skips:
            total = total + s.sum()
        return total

    run("encoder", enc_loss, [ex, ef] + enc_params)

    cb = config.bottleneck_width
    el = _leaf(rng, (cb, 1, 1), scale=0.3)
    ec = _leaf(rng, (cb, 1, 1), scale=0.3)
    fusion_params = [model.fusion.self_l.wq[0], model.fusion.self_c.wv[1],
                     model.fusion.cross.wo]
    run("lccab", lambda: model.fusion(el, ec).sum(), [el, ec] + fusion_params)

    bott = _leaf(rng, (cb, 1, 1), scale=0.3)
    n0 = config.input_multiple
    skips_l = [_leaf(rng, (config.stage_width(s), n0 // 2 ** s, n0 // 2 ** s), 0.3)
               for s in range(config.stages)]
    skips_c = [_leaf(rng, (config.stage_width(s), n0 // 2 ** s, n0 // 2 ** s), 0.3)
               for s in range(config.stages)]
    dec_params = [model.decoder.stages[0][0], model.decoder.stages[1][2][0].wq[0],
                  model.decoder.out_w]
    run("decoder",
        lambda: model.decoder(bott, skips_l, skips_c, True).sum(),
        [bott] + skips_l + skips_c + dec_params)

    # exercise the refinement with a non-zero output conv so its path carries
    # gradient signal
    saved = model.refine.out_w.data.copy()
    model.refine.out_w.data = ad.make_rng(seed + 2).normal(0.0, 0.05,
                                                           saved.shape)
    ir = _leaf(rng, (3, 8, 8))
    ref_params = [model.refine.lum_w, model.refine.chr_w,
                  model.refine.gab.wq[0], model.refine.out_w]
    run("lcgrb", lambda: model.refine(ir, True).sum(), [ir] + ref_params)
    model.refine.out_w.data = saved

    gt = Tensor(ad.make_rng(seed + 3).uniform(0.0, 1.0, (3, 8, 8)))
    p1 = _leaf(rng, (3, 8, 8), scale=0.4)
    p2 = _leaf(rng, (3, 8, 8), scale=0.4)
    run("losses", lambda: total_loss(gt, p1, p2), [p1, p2])

    inp = Tensor(ad.make_rng(seed + 4).uniform(0.0, 1.0, (3, 8, 8)),
                 requires_grad=True)
    all_params = model.parameters()
    picked = [all_params[i] for i in
              rng.choice(len(all_params), size=20, replace=False)]

    def full_loss():
        i_rec, i_ref = model.forward(inp, training=True)
        return i_rec.sum() + i_ref.sum()

    run("full_model", full_loss, [inp] + picked)
    return results
