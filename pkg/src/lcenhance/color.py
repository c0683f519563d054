"""Luminance-chrominance decomposition and recomposition.

Luminance is the fixed weighted sum ``L = 0.299 R + 0.587 G + 0.114 B``;
chrominance is the per-channel residual ``C = I - L``.  Recomposition is
``I = C + L`` and must reproduce the source bit-exactly at 64-bit precision,
which naive float arithmetic does not guarantee: the stored residual is
therefore corrected by a few ulp (with a rare one-or-two-ulp luminance
nudge to break round-to-even ties) so the reconstruction sum rounds back
to the original value.  The corrections are value-level only and do not
change gradients, which follow the plain linear formulas.

Exactness limit: when a channel value is much smaller than the luminance
*and* carries significand bits below the luminance's ulp, the subtraction
``C + L`` is exact by Sterbenz's lemma, so reconstruction would require
``I_k - L`` itself to be representable — which it is not.  No choice of
stored residual can fix such pixels; the round-trip error is then below
one ulp of the luminance (~1e-16 for images in [0, 1]).  Values produced
by standard uniform generators (multiples of 2^-53) are always exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import DimensionError, Tensor

__all__ = ["LUMA_WEIGHTS", "LcPair", "decompose", "recompose", "luminance_of"]

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class LcPair:
    """A (1 x H x W) luminance map and a (3 x H x W) chrominance residual."""

    luminance: Tensor
    chrominance: Tensor


def _luma_data(pixels: np.ndarray) -> np.ndarray:
    wr, wg, wb = LUMA_WEIGHTS
    return wr * pixels[0] + wg * pixels[1] + wb * pixels[2]


def _correct_residual(img: np.ndarray, lum: np.ndarray, res: np.ndarray,
                      iters: int = 6) -> np.ndarray:
    """Step ``res`` by ulps until ``res + lum`` reproduces ``img`` bitwise."""
    res = res.copy()
    for _ in range(iters):
        back = res + lum
        bad = back != img
        if not bad.any():
            break
        res = np.where(bad, np.nextafter(res, np.where(back > img, -np.inf, np.inf)), res)
    return res


def _exact_residual(img: np.ndarray, lum: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual (and possibly ulp-nudged luminance) with exact reconstruction.

    For a handful of pixels no residual reconstructs exactly because the sum
    lands on a round-to-even tie; nudging the luminance of that pixel by one
    or two ulp (within the rounding freedom of the weighted sum) breaks the
    tie.  Returns (chrominance, luminance).
    """
    res = _correct_residual(img, lum, img - lum)
    bad = ((res + lum) != img).any(axis=0)
    if bad.any():
        lum = lum.copy()
        for r, c in np.argwhere(bad):
            pix = img[:, r, c]
            for steps in (1, -1, 2, -2, 3, -3):
                lp = lum[r, c]
                direction = np.inf if steps > 0 else -np.inf
                for _ in range(abs(steps)):
                    lp = np.nextafter(lp, direction)
                cand = _correct_residual(pix, lp, pix - lp)
                if (cand + lp == pix).all():
                    lum[r, c] = lp
                    res[:, r, c] = cand
                    break
    return res, lum


def decompose(img: Tensor) -> LcPair:
    """Split a 3 x H x W image into luminance and chrominance; differentiable."""
    if img.data.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"decompose expects a 3 x H x W image, got {img.shape}")

    lum_data = _luma_data(img.data)
    chroma_data, lum_data = _exact_residual(img.data, lum_data)
    wr, wg, wb = LUMA_WEIGHTS

    def backward_lum(g):
        gx = np.empty_like(img.data)
        gx[0], gx[1], gx[2] = wr * g[0], wg * g[0], wb * g[0]
        return ((img, gx),)

    def backward_chroma(g):
        # d(I_k - L)/dI: identity minus the luminance weights on every channel
        gsum = g.sum(axis=0)
        gx = g.copy()
        gx[0] -= wr * gsum
        gx[1] -= wg * gsum
        gx[2] -= wb * gsum
        return ((img, gx),)

    lum = Tensor(lum_data[None], img.requires_grad, (img,), backward_lum)
    chroma = Tensor(chroma_data, img.requires_grad, (img,), backward_chroma)
    return LcPair(luminance=lum, chrominance=chroma)


def recompose(lc: LcPair) -> Tensor:
    """Broadcast-add luminance back onto the chrominance residual."""
    lum, chroma = lc.luminance, lc.chrominance
    if lum.data.ndim != 3 or lum.shape[0] != 1 or chroma.data.ndim != 3:
        raise DimensionError(
            f"recompose expects 1 x H x W and 3 x H x W, got {lum.shape} and {chroma.shape}")
    if lum.shape[1:] != chroma.shape[1:]:
        raise DimensionError(
            f"recompose spatial mismatch: {lum.shape} vs {chroma.shape}")
    return chroma + lum


def luminance_of(pixels: np.ndarray) -> np.ndarray:
    """Plain-array luminance map (H x W) for non-differentiable callers."""
    return _luma_data(np.asarray(pixels, dtype=np.float64))
