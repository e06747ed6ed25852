"""Build the bundled US snapshot from HMD period life tables.

Usage: python scripts/make_us_snapshot.py DIR

DIR must contain the HMD files fltper_1x1.txt, mltper_1x1.txt and
bltper_1x1.txt (the copies redistributed with the ``lifetables`` package
were used). Writes USA_Mx_1x1.txt and USA_Exposures_1x1.txt in HMD layout
for the years 1950-2015.

The life tables carry central death rates mx but no exposures, so the
exposure file holds life-table person-years Lx scaled to a radix of two
million per sex. Exposures only enter as smoothing weights; a common scale
factor is absorbed by the cross-validated penalty as long as it stays
inside the lambda grid.
"""
import sys
from pathlib import Path

import numpy as np

SEXES = {"Female": ("fltper_1x1.txt", 20.0), "Male": ("mltper_1x1.txt", 20.0),
         "Total": ("bltper_1x1.txt", 40.0)}
FIRST, LAST = 1950, 2015


def read(path):
    rows = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) < 8 or not parts[0].isdigit():
                continue
            year = int(parts[0])
            if FIRST <= year <= LAST:
                rows[(year, parts[1])] = (parts[2], float(parts[7]))
    return rows


def main(src):
    src = Path(src)
    tables = {sex: (read(src / fname), scale) for sex, (fname, scale) in SEXES.items()}
    keys = sorted(tables["Female"][0], key=lambda k: (k[0], int(k[1].rstrip("+"))))
    out = Path(__file__).resolve().parents[1] / "src" / "dpcr" / "datasets"
    note = ("derived from HMD period life tables (mx); exposures are life-table "
            "person-years Lx scaled to radix 2e6 per sex")
    with open(out / "USA_Mx_1x1.txt", "w") as fm, open(out / "USA_Exposures_1x1.txt", "w") as fe:
        fm.write(f"United States of America, Death rates (period 1x1), {note}\n\n")
        fe.write(f"United States of America, Exposure to risk (period 1x1), {note}\n\n")
        head = f"{'Year':>6}{'Age':>14}{'Female':>19}{'Male':>16}{'Total':>16}\n"
        fm.write(head)
        fe.write(head)
        for key in keys:
            year, age = key
            mx = [tables[s][0][key][0] for s in SEXES]
            ex = [tables[s][0][key][1] * tables[s][1] for s in SEXES]
            fm.write(f"{year:>6}{age:>14}" + "".join(f"{v:>16}" for v in mx) + "\n")
            fe.write(f"{year:>6}{age:>14}" + "".join(f"{v:>16.2f}" for v in ex) + "\n")
    assert np.isfinite([float(v) for v in mx]).all()


if __name__ == "__main__":
    main(sys.argv[1])
