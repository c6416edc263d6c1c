"""A small dimension sweep written to CSV, then read back and summarized.

The full experiments use the same runner through the ``rgem sweep-dim``
command with a config file from ``configs/``.
"""

import sys
import tempfile
from pathlib import Path

from rgem.experiments import ExperimentConfig, emit_csv, read_csv, run_synthetic_sweep, summary_path

cfg = ExperimentConfig(dims=(10, 50), repetitions=3, n=300, base_seed=11,
                       record_timing=False)
out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()) / "sweep.csv"
records = run_synthetic_sweep(cfg)
emit_csv(records, out)
print(f"{len(read_csv(out))} records in {out}")
print(open(summary_path(out)).read())
