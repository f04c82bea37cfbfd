"""Download the four MNIST IDX files (needs network access).

usage: python scripts/fetch_mnist.py [--dir data/mnist]
"""

import argparse
import gzip
import os
import struct
import sys
import urllib.request

MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)
FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)


def looks_like_idx(path):
    with gzip.open(path, "rb") as fh:
        (magic,) = struct.unpack(">l", fh.read(4))
    return magic in (2049, 2051)


def fetch(name, out_dir):
    dest = os.path.join(out_dir, name)
    if os.path.exists(dest) and looks_like_idx(dest):
        print(f"{name}: already present")
        return
    last_err = None
    for mirror in MIRRORS:
        url = mirror + name
        try:
            print(f"{name}: fetching {url}")
            urllib.request.urlretrieve(url, dest)
            if not looks_like_idx(dest):
                raise IOError("downloaded file is not an IDX payload")
            return
        except Exception as exc:  # try the next mirror
            last_err = exc
            print(f"  failed: {exc}")
    raise SystemExit(f"could not fetch {name}: {last_err}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", default="data/mnist")
    args = parser.parse_args()
    os.makedirs(args.dir, exist_ok=True)
    for name in FILES:
        fetch(name, args.dir)
    print(f"all four files ready under {args.dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
