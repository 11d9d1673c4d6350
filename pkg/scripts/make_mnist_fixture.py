"""Build the MNIST IDX fixture used by the SSL acceptance test.

The images come from the 5000-sample MNIST extract shipped inside the
``mlxtend`` wheel (``mlxtend/data/data/mnist_5k.csv.gz``, 500 per digit).
We draw a fixed 200 per digit and write gzipped IDX files::

    pip download mlxtend --no-deps -d /tmp/mlx
    python scripts/make_mnist_fixture.py /tmp/mlx/mlxtend-*.whl tests/data
"""
import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

PER_CLASS = 200
SEED = 20160101


def main(wheel, outdir):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images, labels = table[:, :-1].astype(np.uint8), table[:, -1].astype(np.uint8)

    rng = np.random.default_rng(SEED)
    picked = np.sort(np.concatenate([
        rng.choice(np.flatnonzero(labels == c), PER_CLASS, replace=False)
        for c in range(10)
    ]))
    images, labels = images[picked], labels[picked]

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    header = np.array([0x00000803, len(images), 28, 28], dtype=">u4").tobytes()
    with gzip.GzipFile(outdir / "mnist2k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(header + images.tobytes())
    header = np.array([0x00000801, len(labels)], dtype=">u4").tobytes()
    with gzip.GzipFile(outdir / "mnist2k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(header + labels.tobytes())


if __name__ == "__main__":
    main(*sys.argv[1:3])
