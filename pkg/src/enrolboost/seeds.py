"""Sub-seed derivation.

One run seed drives every random stream through fixed integer paths:

    derive_seed(seed, model)              per-model seed ``s`` (model 1 or 2)
    derive_seed(s, SPLIT)                 train/test split
    derive_seed(s, FOLDS)                 CV fold assignment
    derive_seed(s, CV_BAG, fold)          row subsampling inside CV fold ``fold``
    derive_seed(s, REFIT_BAG)             row subsampling of the final refit
    derive_seed(s, PDP_ROWS)              PDP row subsample

Synthetic data uses the run seed directly.
"""

import numpy as np

SPLIT, FOLDS, CV_BAG, REFIT_BAG, PDP_ROWS = 0, 1, 2, 3, 4


def derive_seed(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
