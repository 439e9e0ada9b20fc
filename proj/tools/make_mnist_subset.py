#!/usr/bin/env python3
"""Write the 5000-image MNIST subset bundled with mlxtend as a pair of IDX files.

The subset holds 500 training images per digit. The acceptance suite filters it
to the digits it needs, so all ten digits are kept here.

    python3 tools/make_mnist_subset.py tests/data
"""
import argparse
import glob
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

MLXTEND = "mlxtend==0.24.0"
MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_csv() -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, MLXTEND],
            check=True,
        )
        (wheel,) = glob.glob(os.path.join(tmp, "mlxtend-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            return gzip.decompress(z.read(MEMBER))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("outdir")
    args = parser.parse_args()

    rows = [line.split(",") for line in io.StringIO(fetch_csv().decode()).read().split()]
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        if len(row) != 785:
            raise SystemExit(f"unexpected row width {len(row)}")
        pixels.extend(int(float(v)) for v in row[:784])
        labels.append(int(float(row[784])))

    n = len(rows)
    os.makedirs(args.outdir, exist_ok=True)
    with open(os.path.join(args.outdir, "mnist5k-images.idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels)
    with open(os.path.join(args.outdir, "mnist5k-labels.idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels)
    print(f"wrote {n} images to {args.outdir}")


if __name__ == "__main__":
    main()
