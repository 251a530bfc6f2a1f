"""Compare all calibrators on temperature-distorted synthetic data.

    python scripts/synthetic_benchmark.py --seeds 5 --k 10 --temperature 0.5
"""
import argparse
import json
import time

import numpy as np

from calikit import calibrators
from calikit.core import METHODS
from calikit.metrics import evaluate
from calikit.synth import SynthConfig, gen_calibrated

METRICS = ("accuracy", "nll", "brier", "conf-ece", "cw-ece", "tece")


def run(seeds: int, m_fit: int, m_test: int, k: int, T: float) -> dict:
    rows: dict[str, list[dict]] = {name: [] for name in ("uncalibrated", *METHODS)}
    for s in range(seeds):
        train = gen_calibrated(SynthConfig(m=m_fit, k=k, distortion_T=T, seed=2 * s))
        test = gen_calibrated(SynthConfig(m=m_test, k=k, distortion_T=T, seed=2 * s + 1))
        rows["uncalibrated"].append(evaluate(test.probs, test.labels, METRICS))
        for method in METHODS:
            t0 = time.perf_counter()
            cal = calibrators.fit(method, train, seed=s)
            pred = calibrators.predict(cal, test.probs, test.logits)
            res = evaluate(pred, test.labels, METRICS)
            res["seconds"] = time.perf_counter() - t0
            rows[method].append(res)
    return {name: {key: float(np.mean([r[key] for r in runs])) for key in runs[0]}
            for name, runs in rows.items()}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--m-fit", type=int, default=5000)
    ap.add_argument("--m-test", type=int, default=20000)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--temperature", type=float, default=0.5)
    ap.add_argument("--json", help="also write the summary here")
    args = ap.parse_args()

    summary = run(args.seeds, args.m_fit, args.m_test, args.k, args.temperature)
    cols = (*METRICS, "seconds")
    print(f"{'method':<14}" + "".join(f"{c:>11}" for c in cols))
    for name, vals in summary.items():
        print(f"{name:<14}" + "".join(
            f"{vals[c]:>11.4f}" if c in vals else f"{'':>11}" for c in cols))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(summary, fh, indent=2)


if __name__ == "__main__":
    main()
