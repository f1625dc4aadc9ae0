"""Brute-force loop references for the vectorised kernels.

Each oracle recomputes a block from its defining sums with explicit Python
loops over windows, heads, channels and neighbours, reading the same
parameter arrays as the module under test.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, Optional, Sequence

import numpy as np

from canm.blocks.channel import ChannelAttentionBlock, FullScaleChannelAttention
from canm.blocks.layers import Conv2d
from canm.blocks.window import WindowAttentionBlock, effective_window, shift_active
from canm.data.kspace import centered_fft, kept_band, kspace_degrade
from canm.errors import UsageError
from canm.matching.nbfm import global_match, nbfm_match
from canm.matching.patches import fold_patches, unfold_patches
from canm.metrics.reports import OracleEntry, OracleReport
from canm.tensor.module import Parameter, initialize
from canm.tensor.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

SUITES = ("nbfm", "wab", "cab", "spectral", "fold")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
TOLERANCES = {"nbfm": 1e-10, "wab": 1e-10, "cab": 1e-10, "spectral": 1e-9, "fold": 1e-12}
EPS = 1e-8


# -- literal references ----------------------------------------------------


def pointwise(x: np.ndarray, conv: Conv2d) -> np.ndarray:
    """1x1 convolution, one pixel at a time."""
    B, C, H, W = x.shape
    w = conv.weight.data[:, :, 0, 0]
    b = conv.bias.data if conv.bias is not None else np.zeros(w.shape[0])
    out = np.zeros((B, w.shape[0], H, W))
    for n in range(B):
        for i in range(H):
            for j in range(W):
                out[n, :, i, j] = w @ x[n, :, i, j] + b
    return out


def _softmax(logits: Sequence[float]) -> list[float]:
    top = max(logits)
    e = [math.exp(v - top) for v in logits]
    total = sum(e)
    return [v / total for v in e]


def loop_window_attention(x: np.ndarray, block: WindowAttentionBlock) -> np.ndarray:
    B, C, H, W = x.shape
    ws = effective_window(block.window, H, W)
    shift = shift_active(block.window, H, W, block.shift)
    q, k, v = (pointwise(x, conv) for conv in (block.q, block.k, block.v))
    if shift:
        q, k, v = (np.roll(t, (-(ws // 2), -(ws // 2)), axis=(2, 3)) for t in (q, k, v))
    d = C // block.heads
    out = np.zeros_like(v)
    for n in range(B):
        for wi in range(H // ws):
            for wj in range(W // ws):
                tokens = [(wi * ws + a, wj * ws + b) for a in range(ws) for b in range(ws)]
                for h in range(block.heads):
                    chans = range(h * d, (h + 1) * d)
                    for ti, tj in tokens:
                        logits = [
                            sum(q[n, c, ti, tj] * k[n, c, ui, uj] for c in chans) / math.sqrt(d)
                            for ui, uj in tokens
                        ]
                        probs = _softmax(logits)
                        for c in chans:
                            out[n, c, ti, tj] = sum(p * v[n, c, ui, uj] for p, (ui, uj) in zip(probs, tokens))
    if shift:
        out = np.roll(out, (ws // 2, ws // 2), axis=(2, 3))
    return pointwise(out, block.proj)


def _pool(x: np.ndarray, factor: int) -> np.ndarray:
    B, C, H, W = x.shape
    out = np.zeros((B, C, H // factor, W // factor))
    for i in range(H // factor):
        for j in range(W // factor):
            block = x[:, :, i * factor : (i + 1) * factor, j * factor : (j + 1) * factor]
            out[:, :, i, j] = block.sum(axis=(2, 3)) / (factor * factor)
    return out


def _gram(a: np.ndarray, b: np.ndarray, chans: range) -> np.ndarray:
    """a_i . b_j summed over positions for channels i, j of one head."""
    d = len(chans)
    g = np.zeros((d, d))
    for i, ci in enumerate(chans):
        for j, cj in enumerate(chans):
            g[i, j] = sum(float(a[ci].ravel()[p] * b[cj].ravel()[p]) for p in range(a[ci].size))
    return g


def _mix(attn_rows: np.ndarray, v: np.ndarray, chans: range, out: np.ndarray) -> None:
    for i, ci in enumerate(chans):
        out[ci] = sum(attn_rows[i, j] * v[cj] for j, cj in enumerate(chans))


def loop_channel_attention(x: np.ndarray, block: ChannelAttentionBlock) -> np.ndarray:
    B, C, H, W = x.shape
    d = C // block.heads
    half, quarter = _pool(x, 2), _pool(x, 4)
    qh, kh = pointwise(half, block.q_half), pointwise(half, block.k_half)
    qq, kq = pointwise(quarter, block.q_quarter), pointwise(quarter, block.k_quarter)
    v = pointwise(x, block.v)
    a1, a2 = float(block.alpha1.data[0]), float(block.alpha2.data[0])
    out = np.zeros_like(v)
    for n in range(B):
        for h in range(block.heads):
            chans = range(h * d, (h + 1) * d)
            mixed = a1 * _gram(qh[n], kh[n], chans) + a2 * _gram(qq[n], kq[n], chans)
            probs = np.array([_softmax(list(row / math.sqrt(d))) for row in mixed])
            _mix(probs, v[n], chans, out[n])
    return pointwise(out, block.proj)


def loop_full_channel_attention(x: np.ndarray, block: FullScaleChannelAttention) -> np.ndarray:
    B, C, H, W = x.shape
    d = C // block.heads
    q, k, v = (pointwise(x, conv) for conv in (block.q, block.k, block.v))
    out = np.zeros_like(v)
    for n in range(B):
        for h in range(block.heads):
            chans = range(h * d, (h + 1) * d)
            qn = np.stack([q[n, c] / max(math.sqrt(float((q[n, c] ** 2).sum())), EPS) for c in range(C)])
            kn = np.stack([k[n, c] / max(math.sqrt(float((k[n, c] ** 2).sum())), EPS) for c in range(C)])
            logits = _gram(qn, kn, chans) * float(block.temperature.data[h, 0, 0])
            probs = np.array([_softmax(list(row)) for row in logits])
            _mix(probs, v[n], chans, out[n])
    return pointwise(out, block.proj)


def loop_match(
    p_deg: np.ndarray, p_ref: np.ndarray, grid: tuple[int, int], weight: np.ndarray, neighborhood: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Per query: cosine similarity to every in-grid neighbour, gated, soft-maxed,
    blended. Returns (matched [B, M, L], attention [B, M, J])."""
    B, M, L = p_deg.shape
    H, W = grid
    nh, nw = neighborhood
    matched = np.zeros((B, M, L))
    attention = np.zeros((B, M, nh * nw))
    for n in range(B):
        for r in range(H):
            for c in range(W):
                m = r * W + c
                query = p_deg[n, m]
                qnorm = max(math.sqrt(float(query @ query)), EPS)
                slots, logits = [], []
                for a in range(nh):
                    for b in range(nw):
                        rr, cc = r + a - nh // 2, c + b - nw // 2
                        if not (0 <= rr < H and 0 <= cc < W):
                            continue
                        cand = p_ref[n, rr * W + cc]
                        cnorm = max(math.sqrt(float(cand @ cand)), EPS)
                        slots.append((a * nw + b, rr * W + cc))
                        logits.append(float(query @ cand) / (qnorm * cnorm) * weight[a * nw + b])
                for (j, idx), p in zip(slots, _softmax(logits)):
                    attention[n, m, j] = p
                    matched[n, m] += p * p_ref[n, idx]
    return matched, attention


def loop_unfold(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    B, C, H, W = x.shape
    out = np.zeros((B, H * W, C * ph * pw))
    for n in range(B):
        for i in range(H):
            for j in range(W):
                for c in range(C):
                    for a in range(ph):
                        for b in range(pw):
                            r, s = i + a - ph // 2, j + b - pw // 2
                            if 0 <= r < H and 0 <= s < W:
                                out[n, i * W + j, c * ph * pw + a * pw + b] = x[n, c, r, s]
    return out


def band_error(img: np.ndarray, scale: int) -> float:
    """max |FFT(lr_interp) - FFT(img)| over the kept band, unclamped."""
    H, W = img.shape
    _, lr_interp = kspace_degrade(img, scale, clamp=False)
    rows, cols = kept_band(H, W, scale)
    diff = centered_fft(lr_interp)[rows, cols] - centered_fft(img)[rows, cols]
    return float(np.max(np.abs(diff)))


# -- suites ------------------------------------------------------------------


def _entry(suite: str, case: str, seed: int, diff: float, tolerance: Optional[float] = None) -> OracleEntry:
    tol = TOLERANCES[suite] if tolerance is None else tolerance
    return OracleEntry(suite=suite, case=case, seed=seed, max_abs_diff=diff, tolerance=tol, passed=bool(diff <= tol))


def _max_diff(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)))


def _randomize(params: Iterable[Parameter], rng: np.random.Generator, centre: float = 0.0, spread: float = 0.5) -> None:
    for p in params:
        p.data = centre + spread * rng.standard_normal(p.shape)


def nbfm_suite(seed: int) -> list[OracleEntry]:
    rng = np.random.default_rng(seed)
    B, C, H, W = 1, 3, 6, 5
    x_deg = Tensor(rng.standard_normal((B, C, H, W)))
    x_ref = Tensor(rng.standard_normal((B, C, H, W)))
    p_deg, grid = unfold_patches(x_deg, 3, 3)
    p_ref, _ = unfold_patches(x_ref, 3, 3)
    entries = []
    for hood in ((3, 3), (5, 3)):
        weight = Tensor(1.0 + 0.5 * rng.standard_normal(hood[0] * hood[1]))
        result = nbfm_match(p_deg, p_ref, grid, weight, hood)
        matched, attention = loop_match(p_deg.data, p_ref.data, grid, weight.data, hood)
        diff = max(_max_diff(result.matched_patches.data, matched), _max_diff(result.attention.data, attention))
        entries.append(_entry("nbfm", f"neighborhood{hood[0]}x{hood[1]}", seed, diff))

    x8_deg = Tensor(rng.standard_normal((B, C, 8, 8)))
    x8_ref = Tensor(rng.standard_normal((B, C, 8, 8)))
    q8, grid8 = unfold_patches(x8_deg, 3, 3)
    r8, _ = unfold_patches(x8_ref, 3, 3)
    weight = Tensor(1.0 + 0.5 * rng.standard_normal(9))
    result = nbfm_match(q8, r8, grid8, weight, (3, 3))
    matched, attention = loop_match(q8.data, r8.data, grid8, weight.data, (3, 3))
    diff = max(_max_diff(result.matched_patches.data, matched), _max_diff(result.attention.data, attention))
    entries.append(_entry("nbfm", "grid8x8-neighborhood3x3", seed, diff))

    full = (2 * H - 1, 2 * W - 1)
    weight = Tensor(1.0 + 0.5 * rng.standard_normal(full[0] * full[1]))
    local = nbfm_match(p_deg, p_ref, grid, weight, full)
    wide = global_match(p_deg, p_ref, grid, weight)
    entries.append(_entry("nbfm", "global-equals-covering", seed, _max_diff(local.matched_patches.data, wide.matched_patches.data), 1e-12))
    return entries


def wab_suite(seed: int) -> list[OracleEntry]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 4, 8, 8))
    entries = []
    for shift in (False, True):
        block = WindowAttentionBlock(4, 2, 4, shift=shift)
        initialize(block, seed)
        _randomize(block.parameters(), rng)
        got = block(Tensor(x)).data
        entries.append(_entry("wab", "shifted" if shift else "plain", seed, _max_diff(got, loop_window_attention(x, block))))
    return entries


def cab_suite(seed: int) -> list[OracleEntry]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 4, 8, 8))
    entries = []
    for heads in (1, 2):
        block = ChannelAttentionBlock(4, heads)
        initialize(block, seed)
        _randomize(block.parameters(), rng, spread=0.3)
        got = block(Tensor(x)).data
        entries.append(_entry("cab", f"pyramid-h{heads}", seed, _max_diff(got, loop_channel_attention(x, block))))
    full = FullScaleChannelAttention(4, 2)
    initialize(full, seed)
    _randomize(full.parameters(), rng, spread=0.3)
    got = full(Tensor(x)).data
    entries.append(_entry("cab", "full-h2", seed, _max_diff(got, loop_full_channel_attention(x, full))))
    return entries


def spectral_suite(seed: int) -> list[OracleEntry]:
    rng = np.random.default_rng(seed)
    entries = []
    for size in (16, 64, 256):
        img = rng.random((size, size))
        for scale in (2, 4):
            entries.append(_entry("spectral", f"{size}px-x{scale}", seed, band_error(img, scale)))
    return entries


def fold_suite(seed: int) -> list[OracleEntry]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 3, 7, 6))
    entries = []
    for ph, pw in ((3, 3), (5, 3)):
        patches, grid = unfold_patches(Tensor(x), ph, pw)
        entries.append(_entry("fold", f"unfold{ph}x{pw}", seed, _max_diff(patches.data, loop_unfold(x, ph, pw))))
        back = fold_patches(patches, grid, 3, ph, pw).data
        entries.append(_entry("fold", f"roundtrip{ph}x{pw}", seed, _max_diff(back, x)))
    return entries


_SUITES = {
    "nbfm": nbfm_suite,
    "wab": wab_suite,
    "cab": cab_suite,
    "spectral": spectral_suite,
    "fold": fold_suite,
}


def run_oracles(suites: Iterable[str] = SUITES, seeds: Iterable[int] = DEFAULT_SEEDS) -> OracleReport:
    """Run each named suite on every seed; failures are report entries."""
    suites = list(suites)
    unknown = [s for s in suites if s not in _SUITES]
    if unknown:
        raise UsageError(f"Unknown oracle suite(s) {unknown}. Available: {list(SUITES)}")
    seeds = list(seeds)
    report = OracleReport()
    with no_grad():
        for suite in suites:
            for seed in seeds:
                report.entries.extend(_SUITES[suite](seed))
            logger.info(f"oracle suite {suite}: max diff {report.max_diff(suite):.3e} over {len(seeds)} seeds")
    return report
