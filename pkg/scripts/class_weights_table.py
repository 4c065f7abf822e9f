"""Cross-entropy class weights from the AffectNet train counts, next to the
published weight table."""

from circumplex.affect_core import (
    AFFECTNET7,
    AFFECTNET8,
    AFFECTNET_TRAIN_COUNTS,
    compute_class_weights,
    counts_from_mapping,
)

PUBLISHED = {
    "affectnet8": [0.015605, 0.008709, 0.046078, 0.083078, 0.185434, 0.305953, 0.046934, 0.308210],
    "affectnet7": [0.022600, 0.012589, 0.066464, 0.120094, 0.265305, 0.444943, 0.068006],
}


def main():
    for space in (AFFECTNET8, AFFECTNET7):
        counts = counts_from_mapping(space, AFFECTNET_TRAIN_COUNTS)
        weights = compute_class_weights(counts).weights
        print(f"\n{space.name} (N={counts.sum()})")
        print(f"{'class':<10}{'count':>8}{'computed':>11}{'published':>11}{'diff':>11}")
        for name, n, w, p in zip(space.categories, counts, weights, PUBLISHED[space.name]):
            print(f"{name:<10}{n:>8}{w:>11.6f}{p:>11.6f}{w - p:>+11.2e}")
        print(f"published values sum to {sum(PUBLISHED[space.name]):.6f}")


if __name__ == "__main__":
    main()
