"""Regenerate the bundled COMPAS-like synthetic dataset.

The columns mimic the recidivism benchmark (demographics, juvenile and
prior counts, charge degree) but every value is drawn from a fixed-seed
generator; no real records are involved.
"""

import csv
import sys

import numpy as np

N = 1000
SEED = 20240


def main(path: str) -> None:
    rng = np.random.default_rng(SEED)
    sex = rng.choice(["Male", "Female"], size=N, p=[0.8, 0.2])
    age = np.clip(np.round(rng.gamma(4.0, 8.0, size=N) + 18), 18, 80).astype(int)
    age_cat = np.where(age < 25, "Less than 25", np.where(age <= 45, "25 - 45", "Greater than 45"))
    race = rng.choice(
        ["African-American", "Caucasian", "Hispanic", "Other", "Asian", "Native American"],
        size=N,
        p=[0.5, 0.34, 0.09, 0.05, 0.01, 0.01],
    )
    juv_fel = rng.poisson(0.1 + 0.3 * (age < 25), size=N)
    juv_misd = rng.poisson(0.1 + 0.25 * (age < 25), size=N)
    juv_other = rng.poisson(0.15, size=N)
    priors = rng.negative_binomial(1, 0.25, size=N) + (age > 30) * rng.poisson(1.0, size=N)
    degree = rng.choice(["F", "M"], size=N, p=[0.65, 0.35])
    days_screen = np.clip(np.round(rng.normal(-2, 8, size=N)), -30, 30).astype(int)
    length_of_stay = np.round(rng.exponential(12.0, size=N)).astype(int)

    logit = (
        -0.9
        + 0.17 * np.minimum(priors, 12)
        - 0.035 * (age - 35)
        + 0.35 * (sex == "Male")
        + 0.25 * (juv_fel + juv_misd)
        + 0.2 * (degree == "F")
        + 0.4 * ((priors > 4) & (age < 30))
        + 0.01 * length_of_stay
    )
    recid = (rng.random(N) < 1.0 / (1.0 + np.exp(-logit))).astype(int)

    header = [
        "sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count", "juv_other_count",
        "priors_count", "c_charge_degree", "days_b_screening_arrest", "length_of_stay", "two_year_recid",
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(sex, age, age_cat, race, juv_fel, juv_misd, juv_other, priors, degree,
                       days_screen, length_of_stay, recid):
            w.writerow([str(v) for v in row])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/minleaf/data/compas_like.csv")
