"""Writes the 8x8 handwritten digits bundled with scikit-learn as IDX files.

Pixel values 0..16 are rescaled to 0..255. Output: data/digits/{images,labels}.idx
"""
import pathlib
import struct
import sys

import numpy as np
from sklearn.datasets import load_digits


def main(out_dir: pathlib.Path) -> None:
    d = load_digits()
    images = np.rint(d.images * (255.0 / 16.0)).astype(np.uint8)
    labels = d.target.astype(np.uint8)
    out_dir.mkdir(parents=True, exist_ok=True)
    n, rows, cols = images.shape
    with open(out_dir / "images.idx", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.tobytes())
    with open(out_dir / "labels.idx", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main(pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/digits"))
