"""Render a few synthetic identities under both stock domains.

Writes dataset_preview.png: rows are identities, columns sweep yaw from
left to right; the bottom half shows the same renders pushed through the
dim-tinted-noisy domain.  The pupil offset is the only gaze-dependent
element, which is what makes the task learnable and the oracle checkable.
"""

import numpy as np

from crossgaze import synthdata
from crossgaze.model import GazeLabel
from crossgaze.rng import stream

identities = [synthdata.sample_identity(i, stream(0, "identity", 0, i))
              for i in range(3)]
yaws = np.linspace(-0.8, 0.8, 6)

rows = []
for spec in (synthdata.BRIGHT_CLEAN, synthdata.DIM_TINTED_NOISY):
    for ident in identities:
        rng = np.random.default_rng(ident.subject_id)
        row = [synthdata.apply_domain(synthdata.render(ident, GazeLabel(0.0, y)),
                                      spec, rng)
               for y in yaws]
        rows.append(np.concatenate(row, axis=2))
sheet = np.concatenate(rows, axis=1)  # [3, H*rows, W*cols]

print(f"contact sheet: {sheet.shape[2]}x{sheet.shape[1]} px, "
      f"{len(identities)} identities x {len(yaws)} yaw steps x 2 domains")

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

plt.figure(figsize=(8, 8))
plt.imshow(sheet.transpose(1, 2, 0))
plt.axis("off")
plt.title("top: bright-clean; bottom: dim-tinted-noisy")
plt.tight_layout()
plt.savefig("dataset_preview.png", dpi=130)
print("wrote dataset_preview.png")
