"""Write the bundled MNIST sample as gzipped IDX files.

The source is the 5000-image MNIST subset shipped inside the ``mlxtend``
wheel (``mlxtend/data/data/mnist_5k.csv.gz``; 784 pixel columns followed by
the label). Pass either the wheel or the extracted csv.gz::

    python scripts/build_mnist_sample.py mlxtend-0.24.0-py3-none-any.whl
"""
import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

from qnnstab.data import write_idx

OUT = Path(__file__).resolve().parents[1] / "src" / "qnnstab" / "data_files"


def read_source(path):
    if path.endswith(".whl"):
        blob = zipfile.ZipFile(path).read("mlxtend/data/data/mnist_5k.csv.gz")
    else:
        blob = Path(path).read_bytes()
    table = np.loadtxt(io.StringIO(gzip.decompress(blob).decode()), delimiter=",", dtype=np.int64)
    images = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    return images, labels


def main(argv):
    images, labels = read_source(argv[1])
    write_idx(OUT / "mnist-sample-images-idx3-ubyte.gz", images)
    write_idx(OUT / "mnist-sample-labels-idx1-ubyte.gz", labels)
    print(f"wrote {len(labels)} examples to {OUT}")


if __name__ == "__main__":
    main(sys.argv)
