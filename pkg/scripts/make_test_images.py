"""Render the synthetic test scenes shipped in data/."""

from pathlib import Path

from cadenoise.image_core import save_pgm
from cadenoise.testimages import natural_image

OUT = Path(__file__).resolve().parent.parent / "data"

if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    for size in (128, 256, 512):
        path = OUT / f"synthetic_{size}.pgm"
        save_pgm(natural_image(size), path)
        print(path)
