"""Wall time of the SCIR fit as the number of cumulative points grows.

    python scripts/scir_scaling.py --k 5 --sizes 10000 20000 40000 80000
"""
import argparse
import time

from calikit.scir import build_cumulative_set, fit_bivariate_isotonic
from calikit.synth import SynthConfig, gen_calibrated


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10000, 20000, 40000, 80000])
    ap.add_argument("--temperature", type=float, default=0.5)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    warm = build_cumulative_set(gen_calibrated(SynthConfig(m=100, k=args.k)))
    fit_bivariate_isotonic(warm)

    prev = None
    print(f"{'N':>8} {'points':>8} {'ms':>10} {'ratio':>7}")
    for n in args.sizes:
        m = max(1, n // (args.k - 1))
        pts = build_cumulative_set(gen_calibrated(
            SynthConfig(m=m, k=args.k, distortion_T=args.temperature, seed=n)))
        t = best_of(lambda: fit_bivariate_isotonic(pts), args.repeats)
        ratio = f"{t / prev:7.2f}" if prev else f"{'':>7}"
        print(f"{n:>8} {len(pts):>8} {t * 1e3:>10.2f} {ratio}")
        prev = t


if __name__ == "__main__":
    main()
