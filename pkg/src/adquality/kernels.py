"""Hot inner loops, each with a numba path and a pure-numpy path.

The public names ``cqt_frames`` and ``beat_dp`` resolve to the compiled
variant unless ``ADQUALITY_DISABLE_JIT`` is set. ``autocorr`` always uses
the FFT path: the jitted direct sum is O(N*K) and loses to it at every
signal length the rhythm features see (see benchmarks/bench_kernels.py). Both variants are
always importable under ``*_numba`` / ``*_numpy`` so they can be
benchmarked and cross-checked against each other.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ._jit import JIT_ENABLED, njit

__all__ = [
    "autocorr",
    "autocorr_numba",
    "autocorr_numpy",
    "beat_dp",
    "beat_dp_numba",
    "beat_dp_numpy",
    "cqt_frames",
    "cqt_frames_numba",
    "cqt_frames_numpy",
]


# ---------------------------------------------------------------------------
# Constant-Q correlation
# ---------------------------------------------------------------------------
# ``kernels`` is every bin's complex filter concatenated; bin k occupies
# kernels[offsets[k]:offsets[k + 1]]. ``x`` is already padded so that every
# window starting at ``starts[k] + n * hop`` lies inside it.


@njit
def _cqt_frames_loop(x, kernels_re, kernels_im, offsets, starts, hop, n_frames):
    n_bins = offsets.shape[0] - 1
    out = np.zeros((n_bins, n_frames))
    for k in range(n_bins):
        lo = offsets[k]
        length = offsets[k + 1] - lo
        for n in range(n_frames):
            s = starts[k] + n * hop
            acc_re = 0.0
            acc_im = 0.0
            for m in range(length):
                v = x[s + m]
                acc_re += v * kernels_re[lo + m]
                acc_im += v * kernels_im[lo + m]
            out[k, n] = np.sqrt(acc_re * acc_re + acc_im * acc_im)
    return out


def cqt_frames_numba(x, kernels, offsets, starts, hop, n_frames):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _cqt_frames_loop(
        x,
        np.ascontiguousarray(kernels.real),
        np.ascontiguousarray(kernels.imag),
        np.asarray(offsets, dtype=np.int64),
        np.asarray(starts, dtype=np.int64),
        int(hop),
        int(n_frames),
    )


def cqt_frames_numpy(x, kernels, offsets, starts, hop, n_frames):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n_bins = len(offsets) - 1
    out = np.zeros((n_bins, n_frames))
    step = x.strides[0]
    for k in range(n_bins):
        ker = kernels[offsets[k]:offsets[k + 1]]
        view = as_strided(
            x[starts[k]:],
            shape=(n_frames, len(ker)),
            strides=(hop * step, step),
            writeable=False,
        )
        out[k] = np.abs(view @ ker)
    return out


# ---------------------------------------------------------------------------
# Beat-tracking dynamic programme
# ---------------------------------------------------------------------------


def _interval_penalty(period, tightness):
    """Penalty for each interval length 1..round(2 * period)."""
    intervals = np.arange(1, int(np.round(2.0 * period)) + 1, dtype=np.float64)
    return tightness * np.log(intervals / period) ** 2


@njit
def _beat_dp_loop(a, period, penalty):
    n = a.shape[0]
    cum = np.zeros(n)
    back = np.full(n, -1, dtype=np.int64)
    lo_off = int(np.round(2.0 * period))
    hi_off = max(int(np.round(period / 2.0)), 1)
    for t in range(n):
        best = 0.0
        arg = -1
        first = max(t - lo_off, 0)
        last = t - hi_off
        for p in range(first, last + 1):
            score = cum[p] - penalty[t - p - 1]
            if arg < 0 or score > best:
                best = score
                arg = p
        if arg >= 0 and best > 0.0:
            cum[t] = a[t] + best
            back[t] = arg
        else:
            cum[t] = a[t]
    return cum, back


def beat_dp_numba(a, period, tightness):
    period = float(period)
    return _beat_dp_loop(np.ascontiguousarray(a, dtype=np.float64), period,
                         _interval_penalty(period, float(tightness)))


def beat_dp_numpy(a, period, tightness):
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    cum = np.zeros(n)
    back = np.full(n, -1, dtype=np.int64)
    lo_off = int(np.round(2.0 * period))
    hi_off = max(int(np.round(period / 2.0)), 1)
    penalty = _interval_penalty(period, tightness)
    for t in range(n):
        first = max(t - lo_off, 0)
        last = t - hi_off
        if last >= first:
            cand = cum[first:last + 1] - penalty[t - np.arange(first, last + 1) - 1]
            j = int(np.argmax(cand))
            if cand[j] > 0.0:
                cum[t] = a[t] + cand[j]
                back[t] = first + j
                continue
        cum[t] = a[t]
    return cum, back


# ---------------------------------------------------------------------------
# Raw (unnormalised) autocorrelation r[k] = sum_n a[n] a[n-k]
# ---------------------------------------------------------------------------


@njit
def _autocorr_loop(a, max_lag):
    n = a.shape[0]
    out = np.zeros(max_lag)
    for k in range(min(max_lag, n)):
        acc = 0.0
        for i in range(k, n):
            acc += a[i] * a[i - k]
        out[k] = acc
    return out


def autocorr_numba(a, max_lag):
    return _autocorr_loop(np.ascontiguousarray(a, dtype=np.float64), int(max_lag))


def autocorr_numpy(a, max_lag):
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    size = 1
    while size < 2 * n:
        size *= 2
    spec = np.fft.rfft(a, size)
    full = np.fft.irfft(spec * np.conj(spec), size)[:n]
    out = np.zeros(max_lag)
    m = min(max_lag, n)
    out[:m] = full[:m]
    return out


autocorr = autocorr_numpy
if JIT_ENABLED:
    cqt_frames = cqt_frames_numba
    beat_dp = beat_dp_numba
else:
    cqt_frames = cqt_frames_numpy
    beat_dp = beat_dp_numpy
