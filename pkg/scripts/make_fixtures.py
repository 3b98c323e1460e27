"""Regenerate the packaged measles data fixtures.

The covariate table pins the historical 1950.000 row (city populations and
lagged birth rates) and extends it with smooth drift plus a mild seasonal
wiggle on the birth series.  The case table is a seeded simulation of the
packaged model at its default parameters; see src/spatsmc/data/README.md.

Run from the repository root:  python scripts/make_fixtures.py
"""

import pathlib

import numpy as np
import pandas as pd

DATA_DIR = pathlib.Path(__file__).resolve().parents[1] / "src" / "spatsmc" / "data"

CITIES = ("LONDON", "BIRMINGHAM", "LIVERPOOL", "MANCHESTER", "LEEDS")
POP_1950 = (3389306.0, 1117892.5, 802064.9, 704468.0, 509658.5)
BIRTH_1950 = (70571.23, 24117.23, 19662.96, 15705.46, 10808.73)
POP_TREND = (-0.0069, -0.0041, -0.0052, -0.0047, -0.0030)  # per year
BIRTH_TREND = (-0.0046, -0.0031, -0.0044, -0.0036, -0.0026)
N_BIWEEKS = 391
SEED = 20260808


def make_covariates() -> pd.DataFrame:
    years = 1950.0 + np.arange(N_BIWEEKS) / 26.0
    rows = []
    for year in years:
        elapsed = year - 1950.0
        wiggle = 1.0 + 0.04 * np.sin(2.0 * np.pi * elapsed / 5.0)
        for c, city in enumerate(CITIES):
            rows.append({
                "year": round(year, 6),
                "city": city,
                "pop": round(POP_1950[c] * np.exp(POP_TREND[c] * elapsed), 1),
                "lag_birthrate": round(
                    BIRTH_1950[c] * np.exp(BIRTH_TREND[c] * elapsed) * wiggle, 2),
            })
    return pd.DataFrame(rows)


def make_cases(covar: pd.DataFrame) -> pd.DataFrame:
    from spatsmc.model import simulate
    from spatsmc.models.measles import measles_build

    years = sorted(covar["year"].unique())
    blank = pd.DataFrame([
        {"year": y, "city": c, "cases": 0.0} for y in years for c in CITIES])
    model = measles_build(5, data=blank, covar=covar)
    sim = simulate(model, rng=SEED, nsim=1)[0]
    rows = []
    for i, y in enumerate(years):
        for c, city in enumerate(CITIES):
            rows.append({"year": y, "city": city,
                         "cases": int(sim.obs[i, c])})
    return pd.DataFrame(rows)


def main():
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    covar = make_covariates()
    covar.to_csv(DATA_DIR / "measles_covar.csv", index=False)
    cases = make_cases(covar)
    cases.to_csv(DATA_DIR / "measles_cases.csv", index=False)
    print(f"wrote {len(covar)} covariate rows and {len(cases)} case rows")
    print(cases["cases"].describe())


if __name__ == "__main__":
    main()
