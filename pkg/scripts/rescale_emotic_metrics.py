"""Rescale 1..10 regression metrics onto [-1, 1].

RMSE shrinks by the slope of the affine map (2/9); CCC is unchanged because
it is invariant to a shared affine transform. The second half checks that on
a random batch.
"""

import argparse

import numpy as np

from circumplex.affect_core import ValueRange, scale_array_to_unit, scale_to_unit
from circumplex.losses import ccc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("rmse", nargs="*", type=float, default=[1.150, 1.209, 1.169])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    slope = scale_to_unit(10, ValueRange.TEN_INT) - scale_to_unit(9, ValueRange.TEN_INT)
    for r in args.rmse:
        print(f"rmse {r:.3f} -> {r * slope:.3f}")

    rng = np.random.default_rng(args.seed)
    target = rng.integers(1, 11, (500, 3)).astype(float)
    pred = np.clip(target + rng.normal(scale=1.5, size=target.shape), 1, 10)
    pu, tu = scale_array_to_unit(pred, ValueRange.TEN_INT), scale_array_to_unit(target, ValueRange.TEN_INT)
    for j, dim in enumerate(("valence", "arousal", "dominance")):
        print(f"ccc {dim}: native {ccc(pred[:, j], target[:, j]):.6f}  unit {ccc(pu[:, j], tu[:, j]):.6f}")


if __name__ == "__main__":
    main()
