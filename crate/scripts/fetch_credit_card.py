#!/usr/bin/env python3
"""Download the UCI "default of credit card clients" workbook and write
data/credit-card.csv (header: ID, 23 attributes, `default`).

Usage: scripts/fetch_credit_card.py [output.csv]
Needs network access plus pandas with an .xls reader (xlrd).
"""
import io
import sys
import urllib.request
import zipfile

import pandas as pd

URL = "https://archive.ics.uci.edu/static/public/350/default+of+credit+card+clients.zip"


def main(out):
    raw = urllib.request.urlopen(URL, timeout=60).read()
    with zipfile.ZipFile(io.BytesIO(raw)) as z:
        name = next(n for n in z.namelist() if n.endswith(".xls"))
        frame = pd.read_excel(z.open(name), header=1)
    frame = frame.rename(columns={"default payment next month": "default"})
    if frame.shape != (30000, 25):
        sys.exit(f"unexpected table shape {frame.shape}")
    frame.to_csv(out, index=False)
    print(f"wrote {len(frame)} rows to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/credit-card.csv")
