#!/usr/bin/env python3
"""Cost landscape of the eight-jump weight family.

Scores the published three-decimal weights state by state, then runs a
short multistart simplex search from random boxes plus the published start.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from qcadc import mlopt, models


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/ml_search"))
    ap.add_argument("--restarts", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    w = models.published_ml_weights()
    scores = mlopt.per_state_scores(w)
    cost = sum(s.summand for s in scores)
    print(f"published weights {w.free}: C = {cost:.4f}")
    for s in scores:
        flag = "  MISCLASSIFIED" if s.misclassified else ""
        print(f"  {''.join(map(str, s.bits)):>6s} label={s.label} "
              f"f0={s.f_zero:.4f} f1={s.f_one:.4f} "
              f"summand={s.summand:+.4f}{flag}")

    res = mlopt.optimize_weights(restarts=args.restarts,
                                 rng=np.random.default_rng(args.seed),
                                 start=w)
    trunc = mlopt.truncate_weights(res.weights)
    print(f"best of {res.restarts_run} restarts: C = {res.cost:.4f} "
          f"({res.evaluations} evaluations)")
    print(f"weights (3dp): {trunc.free}")

    (args.out / "search.json").write_text(json.dumps({
        "published_cost": float(cost),
        "best_cost": res.cost,
        "best_weights": list(res.weights.w),
        "best_weights_3dp": list(trunc.w),
        "per_state": [{
            "bits": "".join(map(str, s.bits)), "label": s.label,
            "f_zero": s.f_zero, "f_one": s.f_one,
            "misclassified": s.misclassified} for s in scores],
    }, indent=2) + "\n")
    print(f"wrote {args.out}/search.json")


if __name__ == "__main__":
    main()
