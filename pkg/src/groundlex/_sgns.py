"""Numba kernels for skip-gram with negative sampling.

Random streams use the 64-bit LCG from the reference word2vec code so that a
run is a pure function of its seeds. Window draws and negative draws use
separate streams; the pair-counting pre-pass replays the window stream only.
"""

import math

import numpy as np
from numba import njit, prange

_MUL = np.uint64(25214903917)
_INC = np.uint64(11)
_SHIFT16 = np.uint64(16)
_SHIFT11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _next(state):
    state[0] = state[0] * _MUL + _INC
    return state[0]


@njit(cache=True, inline="always")
def _uniform(state):
    return float(_next(state) >> _SHIFT11) * _INV53


@njit(cache=True, inline="always")
def _window(state, window):
    return 1 + int((_next(state) >> _SHIFT16) % np.uint64(window))


@njit(cache=True, inline="always")
def _sample(cum, state):
    return np.searchsorted(cum, _uniform(state) * cum[-1], side="right")


@njit(cache=True)
def draw_negatives(cum, n, seed):
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = _sample(cum, state)
    return out


@njit(cache=True)
def count_pairs(tokens, offsets, s_lo, s_hi, window, epochs, seed):
    """Number of (center, context) updates a run will perform."""
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    total = 0
    for _ in range(epochs):
        for s in range(s_lo, s_hi):
            lo = offsets[s]
            hi = offsets[s + 1]
            for i in range(lo, hi):
                b = _window(state, window)
                if tokens[i] < 0:
                    continue
                for j in range(max(lo, i - b), min(hi, i + b + 1)):
                    if j != i and tokens[j] >= 0:
                        total += 1
    return total


@njit(cache=True, inline="always")
def _log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit(cache=True, nogil=True)
def run_epoch(
    tokens, offsets, s_lo, s_hi, syn0, syn1, cum, window, negatives,
    alpha0, alpha_min, total, done, win_state, neg_state, neu,
):
    """One pass over sessions ``[s_lo, s_hi)``. Returns (loss, pairs, done)."""
    dim = syn0.shape[1]
    loss = 0.0
    pairs = 0
    denom = max(total, 1)
    for s in range(s_lo, s_hi):
        lo = offsets[s]
        hi = offsets[s + 1]
        for i in range(lo, hi):
            b = _window(win_state, window)
            c = tokens[i]
            if c < 0:
                continue
            for j in range(max(lo, i - b), min(hi, i + b + 1)):
                t = tokens[j]
                if j == i or t < 0:
                    continue
                alpha = alpha0 - (alpha0 - alpha_min) * (done / denom)
                if alpha < alpha_min:
                    alpha = alpha_min
                for k in range(dim):
                    neu[k] = 0.0
                target = t
                label = 1.0
                for n in range(negatives + 1):
                    if n > 0:
                        target = _sample(cum, neg_state)
                        if target == t:
                            continue
                        label = 0.0
                    f = 0.0
                    for k in range(dim):
                        f += syn0[c, k] * syn1[target, k]
                    if label > 0.0:
                        loss -= _log_sigmoid(f)
                    else:
                        loss -= _log_sigmoid(-f)
                    g = (label - _sigmoid(f)) * alpha
                    for k in range(dim):
                        neu[k] += g * syn1[target, k]
                        syn1[target, k] += g * syn0[c, k]
                for k in range(dim):
                    syn0[c, k] += neu[k]
                pairs += 1
                done += 1
    return loss, pairs, done


@njit(cache=True, parallel=True)
def run_epoch_sharded(
    tokens, offsets, bounds, syn0, syn1, cum, window, negatives,
    alpha0, alpha_min, totals, dones, win_states, neg_states, losses, pairs,
):
    # Unsynchronized updates to syn0/syn1 across shards.
    for w in prange(bounds.shape[0] - 1):
        neu = np.empty(syn0.shape[1])
        loss, n, d = run_epoch(
            tokens, offsets, bounds[w], bounds[w + 1], syn0, syn1, cum, window,
            negatives, alpha0, alpha_min, totals[w], dones[w],
            win_states[w:w + 1], neg_states[w:w + 1], neu,
        )
        losses[w] = loss
        pairs[w] = n
        dones[w] = d
