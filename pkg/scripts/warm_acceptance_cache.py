"""Pre-compute the acceptance suite's training runs into .cache_runs.

The suite memoizes desk-scale runs by config hash; warming the cache ahead
of time keeps pytest wall-time reasonable.  Safe to interrupt and resume.
"""

import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "tests"))
from conftest import ACCEPTANCE_MATRIX, cached_run  # noqa: E402

if __name__ == "__main__":
    t0 = time.time()
    for i, spec in enumerate(ACCEPTANCE_MATRIX, 1):
        out = cached_run(**spec)
        print(f"[{i:2d}/{len(ACCEPTANCE_MATRIX)}] {spec['problem']} "
              f"{spec['model']}/{spec['backbone']} seed={spec['seed']}: "
              f"rel_l2={out['relative_l2']:.3e} wall={out['wall_seconds']:.0f}s "
              f"(elapsed {time.time() - t0:.0f}s)", flush=True)
