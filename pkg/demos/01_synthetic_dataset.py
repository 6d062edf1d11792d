"""Render a small synthetic post-mortem dataset and look at one decaying eye.

    python3 demos/01_synthetic_dataset.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from pmiris.manifest import load_manifest
from pmiris.synth import decay_level, gen_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_data")
schedule = {10: 0.0, 24: 0.2, 96: 0.5, 240: 0.8}
m = gen_dataset(out, n_identities=4, sessions=4, decay_schedule=schedule, base_seed=7,
                session_hours=[5, 24, 96, 240])
print(f"wrote {len(m)} samples, manifest at {out / 'manifest.csv'}")

# one eye across sessions: usable (fine) area shrinks as decay sets in
for r in load_manifest(out / "manifest.csv"):
    if r.subject_id != "S000":
        continue
    from PIL import Image

    with Image.open(r.coarse_mask_path) as c, Image.open(r.fine_mask_path) as f:
        coarse, fine = np.asarray(c) > 0, np.asarray(f) > 0
    print(f"{r.sample_id}  {r.capture_hours:5.0f} h  decay {decay_level(schedule, r.capture_hours):.2f}  "
          f"fine/coarse {fine.sum() / coarse.sum():.2f}")
