"""Synthetic stand-in for the UCI cervical-cancer risk-factor CSV.

Same 36-column header, ``?`` for missing cells and a rare positive Biopsy
class, so the whole pipeline can be exercised offline. The values are random
draws, not the real data; results obtained on this file say nothing about the
real dataset.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

STD_KINDS = (
    "condylomatosis",
    "cervical condylomatosis",
    "vaginal condylomatosis",
    "vulvo-perineal condylomatosis",
    "syphilis",
    "pelvic inflammatory disease",
    "genital herpes",
    "molluscum contagiosum",
    "AIDS",
    "HIV",
    "Hepatitis B",
    "HPV",
)

HEADER = (
    [
        "Age",
        "Number of sexual partners",
        "First sexual intercourse",
        "Num of pregnancies",
        "Smokes",
        "Smokes (years)",
        "Smokes (packs/year)",
        "Hormonal Contraceptives",
        "Hormonal Contraceptives (years)",
        "IUD",
        "IUD (years)",
        "STDs",
        "STDs (number)",
    ]
    + [f"STDs:{k}" for k in STD_KINDS]
    + [
        "STDs: Number of diagnosis",
        "STDs: Time since first diagnosis",
        "STDs: Time since last diagnosis",
        "Dx:Cancer",
        "Dx:CIN",
        "Dx:HPV",
        "Dx",
        "Hinselmann",
        "Schiller",
        "Citology",
        "Biopsy",
    ]
)


def generate_rows(n: int = 858, seed: int = 0) -> list[list[str]]:
    rng = np.random.default_rng(seed)
    age = np.clip(rng.normal(27, 8.5, n).round(), 13, 84)
    partners = np.clip(rng.poisson(1.6, n) + 1, 1, 28).astype(float)
    first = np.clip(rng.normal(17, 2.8, n).round(), 10, 32)
    pregnancies = np.clip(rng.poisson(2.2, n), 0, 11).astype(float)
    smokes = (rng.random(n) < 0.145).astype(float)
    smoke_years = np.where(smokes == 1, np.clip(rng.exponential(6, n), 0.2, 37), 0.0).round(1)
    packs = np.where(smokes == 1, (smoke_years * rng.uniform(0.1, 1.2, n)).round(2), 0.0)
    hc = (rng.random(n) < 0.64).astype(float)
    hc_years = np.where(hc == 1, np.clip(rng.exponential(2.3, n), 0.1, 30), 0.0).round(1)
    iud = (rng.random(n) < 0.11).astype(float)
    iud_years = np.where(iud == 1, np.clip(rng.exponential(4, n), 0.1, 19), 0.0).round(1)
    stds = (rng.random(n) < 0.1).astype(float)
    kinds = np.zeros((n, len(STD_KINDS)))
    for r in np.flatnonzero(stds):
        kinds[r, rng.choice(len(STD_KINDS), size=rng.integers(1, 3), replace=False)] = 1
    std_number = kinds.sum(axis=1)
    diagnoses = np.where(stds == 1, np.minimum(std_number, 3), 0.0)
    first_dx = np.where(stds == 1, rng.integers(1, 22, n), np.nan).astype(float)
    last_dx = np.where(stds == 1, np.minimum(first_dx, rng.integers(1, 22, n)), np.nan)
    dx_flags = (rng.random((n, 4)) < 0.025).astype(float)

    risk = (
        -3.9
        + 1.3 * smokes
        + 0.18 * hc_years
        + 0.9 * std_number
        + 0.05 * (age - 27)
        + 0.35 * iud
        + rng.normal(0, 0.6, n)
    )
    biopsy = (rng.random(n) < 1 / (1 + np.exp(-risk))).astype(float)
    screens = np.column_stack(
        [np.where(biopsy == 1, rng.random(n) < 0.6, rng.random(n) < 0.01) for _ in range(3)]
    ).astype(float)

    table = np.column_stack(
        [age, partners, first, pregnancies, smokes, smoke_years, packs, hc, hc_years, iud, iud_years, stds, std_number]
        + [kinds, diagnoses, first_dx, last_dx, dx_flags, screens, biopsy]
    )

    # Rows that skipped the questionnaire lose most answers, like in the source file.
    skipped = rng.random(n) < 0.12
    table[skipped, 4:25] = np.nan
    for col in (1, 2, 3):
        table[rng.random(n) < 0.03, col] = np.nan

    rows = []
    for r in range(n):
        cells = []
        for v in table[r]:
            if np.isnan(v):
                cells.append("?")
            elif float(v).is_integer():
                cells.append(f"{v:.1f}")
            else:
                cells.append(f"{v:g}")
        # Integers in the risk-factor block are written without a decimal in the source file.
        cells[0] = str(int(table[r, 0]))
        for j in range(28, 36):
            cells[j] = str(int(table[r, j])) if cells[j] != "?" else "?"
        rows.append(cells)
    return rows


def write_surrogate_csv(path: str | Path, n: int = 858, seed: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        writer.writerows(generate_rows(n, seed))
    return path
