"""Time the numba and pure-numpy variants of each hot kernel.

    python benchmarks/bench_kernels.py [--repeat 3] [--seconds 10]

Each kernel runs once to warm up (JIT compilation is excluded), then the
best of ``--repeat`` runs is reported. Outputs of both variants are
compared so a speedup never hides a wrong answer.
"""

import argparse
import time

import numpy as np

from adquality import kernels, rhythm
from adquality.dsp import AudioClip, cqt
from adquality.synth import chord, click_track


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cqt_case(seconds):
    """Reuse dsp.cqt's kernel construction by capturing its call into the kernel."""
    clip = AudioClip(chord([261.63, 329.63, 392.0], seconds), 44100)
    captured = {}
    orig = kernels.cqt_frames

    def grab(*args):
        captured["args"] = args
        return orig(*args)

    kernels.cqt_frames = grab
    try:
        cqt(clip)
    finally:
        kernels.cqt_frames = orig
    return captured["args"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seconds", type=float, default=10.0)
    args = ap.parse_args()

    clip = AudioClip(click_track(120, args.seconds), 44100)
    acc = rhythm.accent_signal(clip)
    period = acc.frame_rate * 60 / 120
    a = acc.values / acc.values.std()
    cqt_args = cqt_case(args.seconds)

    cases = [
        ("cqt_frames", kernels.cqt_frames_numba, kernels.cqt_frames_numpy, cqt_args),
        ("beat_dp", kernels.beat_dp_numba, kernels.beat_dp_numpy, (a, period, rhythm.TIGHTNESS)),
        ("autocorr", kernels.autocorr_numba, kernels.autocorr_numpy, (acc.values, acc.values.size)),
    ]
    print(f"{'kernel':<12} {'numba_s':>9} {'numpy_s':>9} {'speedup':>8} {'max_rel_diff':>13}")
    for name, fast, slow, call_args in cases:
        t_fast, out_fast = best_of(lambda: fast(*call_args), args.repeat)
        t_slow, out_slow = best_of(lambda: slow(*call_args), args.repeat)
        first_fast = out_fast[0] if isinstance(out_fast, tuple) else out_fast
        first_slow = out_slow[0] if isinstance(out_slow, tuple) else out_slow
        diff = np.max(np.abs(first_fast - first_slow)) / max(np.max(np.abs(first_slow)), 1e-300)
        print(f"{name:<12} {t_fast:>9.4f} {t_slow:>9.4f} {t_slow / t_fast:>7.1f}x {diff:>13.2e}")


if __name__ == "__main__":
    main()
