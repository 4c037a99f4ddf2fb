"""Regenerate the checked-in demo corpus under configs/corpus/.

Deterministic: rerunning never changes the repository. The corpus is 24
small tile images; the second half are jittered copies of the first, so
the dedup stage has real work to do at its default threshold.
"""

import json
from pathlib import Path

import numpy as np

from divdet import save_png

OUT = Path(__file__).parent / "corpus"
N = 24
SIZE = 24


def tile_image(i: int, rng: np.random.Generator) -> np.ndarray:
    img = np.zeros((SIZE, SIZE, 3)) + 0.05
    r, c = divmod(i % 10, 5)
    cw = SIZE / 5
    img[r * (SIZE // 2):(r + 1) * (SIZE // 2),
        int(c * cw):int((c + 1) * cw) + 1, :] = 0.9
    if i >= 10:
        img = np.clip(img + rng.normal(0.0, 0.01, img.shape), 0.0, 1.0)
    return img


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(5)
    lines = []
    for i in range(N):
        name = f"img_{i:03d}.png"
        save_png(tile_image(i, rng), OUT / name)
        lines.append(json.dumps({
            "file": name,
            "label": "real" if i % 2 == 0 else "fake",
            "generator": "camera" if i % 2 == 0 else "toygen",
        }))
    (OUT / "labels.jsonl").write_text("\n".join(lines) + "\n")
    print(f"wrote {N} images to {OUT}")


if __name__ == "__main__":
    main()
