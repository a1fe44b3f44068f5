"""Check the full three-branch loss gradient against finite differences.

Builds a fresh net and a frozen 8-image batch (jittered copies, mined
positives, fixed kernel bandwidth), then compares the analytic gradient
with central differences on 200 randomly sampled coordinates.
Coordinates whose perturbation crosses a ReLU/argmax/L1 kink are excluded
and resampled - a central difference is not a derivative estimate there.
"""

import time

from crossgaze.nn import grad_check_report
from crossgaze.rng import stream
from crossgaze.trainer import gradcheck_setup

net, loss_fn = gradcheck_setup(seed=0, batch_size=8)
t0 = time.perf_counter()
report = grad_check_report(loss_fn, net.layers, h=1e-5, tol=1e-4,
                           n_coords=200, rng=stream(0, "gradcheck"))
elapsed = time.perf_counter() - t0

print(f"checked coordinates : {report['checked']}")
print(f"kink crossings skipped: {report['skipped_kinks']}")
print(f"max relative error  : {report['max_rel_err']:.3e}  (tolerance 1e-4)")
print(f"elapsed             : {elapsed:.1f}s")
print("PASS" if report["passed"] else "FAIL")
