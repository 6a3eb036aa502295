#!/usr/bin/env python3
"""Rebuild data/sp500_close_1980_1999.csv from the openintro sp500_1950_2018
table shipped in the `rdatasets` wheel, and check it against the recorded
SHA-256.

    python3 scripts/fetch_sp500.py            # verify the shipped file
    python3 scripts/fetch_sp500.py --write    # overwrite it

Needs pip and pandas.
"""

import argparse
import hashlib
import io
import lzma
import pathlib
import subprocess
import sys
import tempfile
import zipfile

import pandas as pd

WHEEL = "rdatasets==0.2.10"
MEMBER = "rdatasets/_data/openintro/sp500_1950_2018.pkl.compress"
ROOT = pathlib.Path(__file__).resolve().parent.parent
TARGET = ROOT / "data" / "sp500_close_1980_1999.csv"
CHECKSUM = TARGET.with_name(TARGET.name + ".sha256")


def load_table() -> pd.DataFrame:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", WHEEL, "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("rdatasets-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            raw = lzma.decompress(z.read(MEMBER))
    return pd.read_pickle(io.BytesIO(raw))


def render(df: pd.DataFrame) -> bytes:
    dates = pd.to_datetime(df["Date"])
    keep = (dates >= "1980-01-01") & (dates <= "1999-12-31")
    out = io.StringIO()
    out.write("Date,Close\n")
    for d, c in zip(dates[keep], df.loc[keep, "Close"]):
        out.write(f"{d:%Y-%m-%d},{c:.6f}\n")
    return out.getvalue().encode()


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--write", action="store_true", help="overwrite the shipped CSV")
    args = ap.parse_args()

    body = render(load_table())
    digest = hashlib.sha256(body).hexdigest()
    expected = CHECKSUM.read_text().split()[0]
    if args.write:
        TARGET.write_bytes(body)
    print(f"{len(body.splitlines()) - 1} rows, sha256 {digest}")
    if digest != expected:
        print(f"checksum mismatch: expected {expected}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
