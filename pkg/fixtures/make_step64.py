"""Regenerate step64.pgm, the bundled denoise fixture.

64x64, left half 0.3, right half 0.7 (the step sits between columns 31
and 32), uniform noise of amplitude 0.02 from a fixed seed, quantized
to the 255 levels the PGM container stores so the shipped bytes load
back exactly.  Run from this directory:

    python3 make_step64.py
"""

from pathlib import Path

import numpy as np

from pxlaplace.restoration import ImageGrid, write_pgm

SEED = 42
NOISE = 0.02
SHADES = (0.3, 0.7)


def build():
    rng = np.random.default_rng(SEED)
    vals = np.full((64, 64), SHADES[0])
    vals[:, 32:] = SHADES[1]
    vals = vals + rng.uniform(-NOISE, NOISE, size=vals.shape)
    return ImageGrid(np.clip(np.rint(vals * 255.0), 0, 255) / 255.0)


if __name__ == "__main__":
    out = Path(__file__).resolve().parent / "step64.pgm"
    write_pgm(out, build())
    print(f"wrote {out}")
