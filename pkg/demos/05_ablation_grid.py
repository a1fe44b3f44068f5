"""Run the 8-row loss-subset grid on a small cross-domain task.

Every subset of {aug, con, mmd} is trained and evaluated; the table shows
per-task error, the across-task average, and relative improvement over
the bare-regression baseline row.  Takes a few minutes: 8 subsets x 2
seeds, each a real training run.  The stock protocol in the acceptance
suite is the same grid at 20x200 training samples and 3 seeds.
"""

import tempfile
from pathlib import Path

from crossgaze import synthdata
from crossgaze.evalbench import run_ablation
from crossgaze.trainer import TrainConfig

tmp = Path(tempfile.mkdtemp())
a_train = str(tmp / "a_train.shard")
b_test = str(tmp / "b_test.shard")
synthdata.generate(20, 10, 100, synthdata.BRIGHT_CLEAN, a_train)
synthdata.generate(23, 4, 50, synthdata.DIM_TINTED_NOISY, b_test)

config = TrainConfig(seed=0, batch_size=64, learning_rate=3e-4, epochs=10)
grid = run_ablation([("A->B", a_train, b_test)], config, n_seeds=2)
print(grid.format_table())
