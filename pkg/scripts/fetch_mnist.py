"""Fetch the MNIST IDX files into a local data directory.

The library never downloads anything; this script is the one-off tool that
populates ``data/mnist``.  The canonical LeCun host is frequently unavailable,
so the files are taken from the ``mnist-data`` npm tarball, which ships the
four original, uncompressed IDX files.  They are written gzip-compressed
under their usual names (``train-images-idx3-ubyte.gz`` etc.).

    python scripts/fetch_mnist.py --out data/mnist
"""
import argparse
import gzip
import io
import sys
import tarfile
import urllib.request
from collections import Counter
from pathlib import Path

TARBALL = "https://registry.npmjs.org/mnist-data/-/mnist-data-1.2.6.tgz"
FILES = {
    "train-images-idx3-ubyte": 47040016,
    "train-labels-idx1-ubyte": 60008,
    "t10k-images-idx3-ubyte": 7840016,
    "t10k-labels-idx1-ubyte": 10008,
}
# first ten training labels of the official release
TRAIN_LABEL_HEAD = bytes([5, 0, 4, 1, 9, 2, 1, 3, 1, 4])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/mnist")
    parser.add_argument("--url", default=TARBALL)
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"downloading {args.url}")
    with urllib.request.urlopen(args.url, timeout=120) as resp:
        blob = resp.read()

    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        for name, size in FILES.items():
            payload = tar.extractfile(f"package/data/{name}").read()
            if len(payload) != size:
                sys.exit(f"{name}: expected {size} bytes, got {len(payload)}")
            if name == "train-labels-idx1-ubyte":
                if payload[8:18] != TRAIN_LABEL_HEAD:
                    sys.exit("train labels do not match the official release")
                print("train label counts:", sorted(Counter(payload[8:]).items()))
            with gzip.GzipFile(out / f"{name}.gz", "wb", mtime=0) as fh:
                fh.write(payload)
            print(f"wrote {out / (name + '.gz')}")


if __name__ == "__main__":
    main()
