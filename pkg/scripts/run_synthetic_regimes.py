"""Train the three regimes on the same synthetic circumplex data and compare.

    python3 scripts/run_synthetic_regimes.py --epochs 10 --seed 0
"""

import argparse
import json

from circumplex.data import SyntheticSpec, gen_synthetic_splits
from circumplex.harness import TrainConfig, evaluate, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--balance", action="store_true", help="undersample to the minority class each epoch")
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    splits = gen_synthetic_splits(SyntheticSpec(seed=args.seed), {"train": args.train, "test": args.test})
    rows = {}
    for regime in ("discrete", "combined", "valence_arousal"):
        cfg = TrainConfig(regime=regime, epochs=args.epochs, seed=args.seed, balance_by_class=args.balance)
        ckpt, log = train(cfg, splits["train"])
        rep = evaluate(ckpt, splits["test"])
        rows[regime] = {
            "f1": rep.f1,
            "accuracy": rep.accuracy,
            "rmse_valence": rep.regression["valence"]["rmse"] if rep.regression else None,
            "rmse_arousal": rep.regression["arousal"]["rmse"] if rep.regression else None,
            "ccc_valence": rep.ccc["valence"] if rep.ccc else None,
            "ccc_arousal": rep.ccc["arousal"] if rep.ccc else None,
            "seconds": round(log.wall_time, 2),
        }

    if args.json:
        print(json.dumps(rows, indent=2))
        return
    cols = ["f1", "accuracy", "rmse_valence", "rmse_arousal", "ccc_valence", "ccc_arousal", "seconds"]
    print(f"{'regime':<16}" + "".join(f"{c:>14}" for c in cols))
    for regime, row in rows.items():
        cells = "".join(f"{'-' if row[c] is None else format(row[c], '.4f'):>14}" for c in cols)
        print(f"{regime:<16}{cells}")


if __name__ == "__main__":
    main()
