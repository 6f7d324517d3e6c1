"""Generate the bundled synthetic stand-in for the Pima diabetes data.

The real file is not redistributed. The stand-in has the same columns that
the analysis protocol reads, 768 rows of which 16 carry a zero Glucose or
BMI code (dropped by the protocol, leaving 752 rows with 264 cases), and an
outcome drawn from a logistic model on the standardized covariates with
coefficients close to the published full-data fit. The benchmark JSON holds
the full-data logistic fit computed with statsmodels, so the package's own
fit is checked against an independent implementation.

Usage: python3 scripts/make_pima_standin.py [outdir]
"""
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats
from scipy.special import expit

SEED = 20240521
N_KEEP, N_CASES = 752, 264
COEF = np.array([-0.835, 1.135, 0.443, 0.623])   # intercept, Glucose, Pregnancies, BMI


def covariates(rng, n):
    R = np.array([[1.0, 0.13, 0.23], [0.13, 1.0, 0.02], [0.23, 0.02, 1.0]])
    z = rng.standard_normal((n, 3)) @ np.linalg.cholesky(R).T
    glucose = np.clip(np.round(121.7 + 30.5 * z[:, 0]), 44, 199)
    r, mean = 1.96, 3.85
    preg = stats.nbinom.ppf(stats.norm.cdf(z[:, 1]), r, r / (r + mean))
    bmi = np.clip(np.round(32.5 + 6.9 * z[:, 2], 1), 18.2, 67.1)
    return pd.DataFrame({"Pregnancies": preg.astype(int), "Glucose": glucose.astype(int),
                         "BMI": bmi})


def main(outdir):
    rng = np.random.default_rng(SEED)
    keep = covariates(rng, N_KEEP)
    Xs = (keep[["Glucose", "Pregnancies", "BMI"]] - keep[["Glucose", "Pregnancies", "BMI"]].mean()) \
        / keep[["Glucose", "Pregnancies", "BMI"]].std(ddof=1)
    prob = expit(COEF[0] + Xs.to_numpy() @ COEF[1:])
    # redraw outcomes until the case count matches the published one
    for attempt in range(10_000):
        y = (np.random.default_rng([SEED, attempt]).random(N_KEEP) < prob).astype(int)
        if y.sum() == N_CASES:
            break
    keep["Outcome"] = y
    extra = covariates(rng, 16)
    extra.loc[:7, "Glucose"] = 0
    extra.loc[8:, "BMI"] = 0.0
    extra["Outcome"] = [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]
    data = pd.concat([keep, extra], ignore_index=True)
    data = data.iloc[rng.permutation(len(data))].reset_index(drop=True)
    outdir = Path(outdir)
    data.to_csv(outdir / "pima_standin.csv", index=False)

    # benchmark: the protocol's preprocessing, then an independent logistic fit
    d = data[(data.Glucose != 0) & (data.BMI != 0)]
    cols = ["Glucose", "Pregnancies", "BMI"]
    Z = (d[cols] - d[cols].mean()) / d[cols].std(ddof=1)
    res = sm.Logit(d["Outcome"].to_numpy(), sm.add_constant(Z.to_numpy())).fit(disp=0, tol=1e-12)
    names = ["alpha", "beta1", "beta2", "beta3"]
    bench = {
        "source": "synthetic stand-in; full-data logistic fit by statsmodels",
        "covariates": cols, "n": int(len(d)), "n1": int(d.Outcome.sum()),
        "case_prop": float(d.Outcome.mean()),
        "estimate": dict(zip(names, map(float, res.params))),
        "se": dict(zip(names, map(float, res.bse))),
        "generating_coefficients": dict(zip(names, COEF.tolist())),
        "seed": SEED,
    }
    (outdir / "pima_standin_benchmark.json").write_text(json.dumps(bench, indent=2, sort_keys=True) + "\n")
    print(json.dumps(bench, indent=2))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src" / "ccel" / "data")
