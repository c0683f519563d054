"""Quantitative evaluation: PSNR, SSIM, distribution statistics, and
Bradley-Terry aggregation of pairwise preference outcomes."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .color import luminance_of

__all__ = [
    "RankingOutcome",
    "psnr",
    "ssim",
    "bradley_terry_fit",
    "variance_of_laplacian",
    "distribution_report",
    "results_table",
]

PSNR_CAP_DB = 100.0

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0],
                             [1.0, -4.0, 1.0],
                             [0.0, 1.0, 0.0]])


def _as_array(img) -> np.ndarray:
    data = getattr(img, "data", img)
    return np.asarray(data, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); identical images return the 100 dB cap."""
    a = _as_array(a)
    b = _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _window_means(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    k = window.shape[0]
    h, w = img.shape
    ho, wo = h - k + 1, w - k + 1
    out = np.zeros((ho, wo))
    for di in range(k):
        for dj in range(k):
            out += window[di, dj] * img[di:di + ho, dj:dj + wo]
    return out


def ssim(a, b) -> float:
    """Single-scale SSIM on the luminance channel.

    11x11 Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03, peak 1.0,
    averaged over all valid window positions.
    """
    a = _as_array(a)
    b = _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    x = luminance_of(a) if a.ndim == 3 else a
    y = luminance_of(b) if b.ndim == 3 else b
    if min(x.shape) < 11:
        raise ValueError(f"image {x.shape} smaller than the 11x11 SSIM window")

    window = _gaussian_window()
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    mu_x = _window_means(x, window)
    mu_y = _window_means(y, window)
    xx = _window_means(x * x, window) - mu_x * mu_x
    yy = _window_means(y * y, window) - mu_y * mu_y
    xy = _window_means(x * y, window) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def variance_of_laplacian(img) -> float:
    """Sharpness statistic: variance of the 3x3 Laplacian response of the
    luminance map over valid (interior) positions.

    Padding would fabricate responses along the border of any bright image;
    restricting to the interior keeps a constant image at exactly zero and
    makes the statistic invariant to adding a constant.  Images smaller
    than 3x3 have no valid positions and score 0.
    """
    img = _as_array(img)
    lum = luminance_of(img) if img.ndim == 3 else img
    h, w = lum.shape[0] - 2, lum.shape[1] - 2
    if h < 1 or w < 1:
        return 0.0
    resp = np.zeros((h, w))
    for di in range(3):
        for dj in range(3):
            if LAPLACIAN_KERNEL[di, dj] != 0.0:
                resp += LAPLACIAN_KERNEL[di, dj] * lum[di:di + h, dj:dj + w]
    return float(resp.var())


@dataclass
class RankingOutcome:
    """One aggregated pairwise preference observation."""

    winner: str
    loser: str
    weight: float = 1.0

    def __post_init__(self):
        if self.winner == self.loser:
            raise ValueError(f"winner and loser are both {self.winner!r}")
        if self.weight < 1:
            raise ValueError(f"weight must be >= 1, got {self.weight}")


def _components(items: list[str], edges: set[tuple[str, str]]) -> list[set[str]]:
    adjacency = defaultdict(set)
    for a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    remaining = set(items)
    components = []
    while remaining:
        start = remaining.pop()
        comp = {start}
        frontier = [start]
        while frontier:
            node = frontier.pop()
            for nxt in adjacency[node] & remaining:
                remaining.discard(nxt)
                comp.add(nxt)
                frontier.append(nxt)
        components.append(comp)
    return components


def bradley_terry_fit(outcomes: list[RankingOutcome], smoothing: float = 0.0,
                      tol: float = 1e-10, max_iter: int = 10_000,
                      debug: bool = False) -> dict[str, float]:
    """Maximum-likelihood strengths via minorization-maximization.

    Strengths are normalized to sum to one.  The comparison graph must be
    connected; ``smoothing`` optionally adds a tiny win count to every
    ordered pair so items with zero wins stay strictly positive.
    """
    if not outcomes:
        raise ValueError("no outcomes to fit")
    items = sorted({o.winner for o in outcomes} | {o.loser for o in outcomes})
    index = {name: i for i, name in enumerate(items)}
    n = len(items)
    wins = np.full((n, n), smoothing)
    np.fill_diagonal(wins, 0.0)
    for o in outcomes:
        wins[index[o.winner], index[o.loser]] += o.weight

    comps = _components(items, {(o.winner, o.loser) for o in outcomes})
    if len(comps) > 1:
        listing = "; ".join(",".join(sorted(c)) for c in comps)
        raise ValueError(f"comparison graph is disconnected: components {listing}")

    total = wins + wins.T
    w_row = wins.sum(axis=1)
    pi = np.full(n, 1.0 / n)
    prev_ll = -np.inf
    for _ in range(max_iter):
        denom = pi[:, None] + pi[None, :]
        np.fill_diagonal(denom, 1.0)
        new_pi = w_row / (total / denom).sum(axis=1)
        new_pi /= new_pi.sum()
        if debug:
            ll = _log_likelihood(wins, new_pi)
            if ll < prev_ll - 1e-9:
                raise AssertionError("MM iteration decreased the log-likelihood")
            prev_ll = ll
        rel = np.max(np.abs(new_pi - pi) / np.maximum(pi, 1e-300))
        pi = new_pi
        if rel < tol:
            break
    return {name: float(pi[index[name]]) for name in items}


def _log_likelihood(wins: np.ndarray, pi: np.ndarray) -> float:
    n = len(pi)
    ll = 0.0
    for i in range(n):
        for j in range(n):
            if i != j and wins[i, j] > 0:
                ll += wins[i, j] * np.log(pi[i] / (pi[i] + pi[j]))
    return ll


def distribution_report(images: list) -> dict:
    """Per-image mean intensity (0-255 scale), sharpness, and 32-bin
    histogram summaries over the image set."""
    if not images:
        raise ValueError("no images to report on")
    rows = []
    for i, img in enumerate(images):
        data = _as_array(img)
        rows.append({
            "index": i,
            "mean_intensity": float(data.mean() * 255.0),
            "sharpness": variance_of_laplacian(data),
        })
    intensities = [r["mean_intensity"] for r in rows]
    sharpness = [r["sharpness"] for r in rows]
    intensity_hist, intensity_edges = np.histogram(intensities, bins=32, range=(0.0, 255.0))
    sharp_max = max(max(sharpness), 1e-12)
    sharpness_hist, sharpness_edges = np.histogram(sharpness, bins=32, range=(0.0, sharp_max))
    return {
        "rows": rows,
        "intensity_hist": intensity_hist.tolist(),
        "intensity_edges": intensity_edges.tolist(),
        "sharpness_hist": sharpness_hist.tolist(),
        "sharpness_edges": sharpness_edges.tolist(),
    }


def results_table(rows: list[tuple[str, float, float]]) -> str:
    """Tab-separated (pair id, PSNR dB, SSIM) table with a mean footer."""
    lines = ["id\tpsnr_db\tssim"]
    for pair_id, p, s in rows:
        lines.append(f"{pair_id}\t{p:.6f}\t{s:.6f}")
    if rows:
        mean_p = sum(r[1] for r in rows) / len(rows)
        mean_s = sum(r[2] for r in rows) / len(rows)
        lines.append(f"mean\t{mean_p:.6f}\t{mean_s:.6f}")
    return "\n".join(lines) + "\n"
