"""Permutation importance on held-out data.

In the "smooth" scenario x1 drives the location and x2 the scale; five
noise columns carry no signal.  Shuffling a signal column raises the
test CRPS, shuffling a noise column barely changes it.

    python3 demos/importance.py
"""
import numpy as np

from distforest import (CensoredNormal, ForestConfig, SyntheticScenario, generate, grow_forest,
                        variable_importance)


def main():
    ds, _ = generate(SyntheticScenario("smooth", n=1500, m_noise=5, seed=10, params={"scale": 1.0}))
    train, test = ds.subset(np.arange(1000)), ds.subset(np.arange(1000, 1500))
    forest = grow_forest(train, CensoredNormal(), ForestConfig(ntree=50, seed=0))
    imp = variable_importance(forest, test, rng=1, n_permutations=5)
    width = max(imp.values())
    for name, delta in sorted(imp.items(), key=lambda kv: -kv[1]):
        bar = "#" * max(0, int(round(40 * delta / width)))
        print(f"{name:8s} {delta:+.4f} {bar}")


if __name__ == "__main__":
    main()
