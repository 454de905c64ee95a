"""Calibration check with randomized PIT values.

EMOS is correctly specified for the "emos-linear" scenario, so its
held-out PIT values should look uniform.  Censored observations get a
uniform draw below the predicted probability of zero.

    python3 demos/calibration.py
"""
import numpy as np
from scipy import stats

from distforest import (CensoredNormal, SyntheticScenario, fit_emos, generate,
                        quantile_residuals)


def main():
    fam = CensoredNormal()
    ds, _ = generate(SyntheticScenario("emos-linear", n=3000, seed=4))
    train, test = ds.subset(np.arange(1500)), ds.subset(np.arange(1500, 3000))
    model = fit_emos(train, fam, "ens_mean", "ens_sd")
    print(f"fitted beta {np.round(model.beta, 3)}, gamma {np.round(model.gamma, 3)}")
    qr = quantile_residuals(fam, model.predict(test.X), test.y, rng=0, n_draws=1)
    pit = qr.pit[:, 0]
    counts, _ = np.histogram(pit, bins=10, range=(0, 1))
    print("PIT decile counts (expected", test.n // 10, "each):", counts.tolist())
    print(f"KS p-value {stats.kstest(pit, 'uniform').pvalue:.3f}")
    print(f"quantile residuals: mean {qr.residuals.mean():+.3f}, sd {qr.residuals.std():.3f}")


if __name__ == "__main__":
    main()
