#!/usr/bin/env python3
"""Download the UCI Abalone dataset and write data/abalone.csv in the
labeled schema (f1..f10, y).

The sex attribute is one-hot encoded (M, F, I) into f1..f3; the seven
numeric measurements follow as f4..f10; the target y is the ring count.
Needs network access to archive.ics.uci.edu.
"""

import csv
import io
import sys
import urllib.request
from pathlib import Path

URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/abalone/abalone.data"
OUT = Path(__file__).resolve().parent.parent / "data" / "abalone.csv"

SEX_ONEHOT = {"M": (1, 0, 0), "F": (0, 1, 0), "I": (0, 0, 1)}


def main() -> int:
    print(f"fetching {URL}")
    with urllib.request.urlopen(URL, timeout=60) as resp:
        text = resp.read().decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if len(rows) != 4177:
        print(f"warning: expected 4177 rows, got {len(rows)}", file=sys.stderr)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"f{i}" for i in range(1, 11)] + ["y"])
        for r in rows:
            sex, rest = r[0], r[1:]
            w.writerow(list(SEX_ONEHOT[sex]) + rest)
    print(f"wrote {len(rows)} rows to {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
