"""End-to-end evaluation on a synthetic decay series: EER by horizon and Rank-k.

    python3 demos/04_evaluation.py [out_dir]

Takes about a minute on one core.
"""

import sys
from pathlib import Path

from pmiris.config import PipelineConfig
from pmiris.pipeline import run_all
from pmiris.report import build_report, write_report
from pmiris.synth import gen_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_eval")
m = gen_dataset(out / "data", 10, 4, {10: 0.0, 48: 0.3, 200: 0.7}, base_seed=2, session_hours=[3, 20, 48, 200])
cfg = PipelineConfig(roc_horizons=(10, 48, 200), cmc_horizons=(20, 48, 200), fnmr_horizons=(10, 48, 200))
rows, N, codes, skipped = run_all(m, cfg)
report, curves = build_report(m, rows, cfg, skipped)
write_report(out / "report", report, curves)

print(f"{len(rows)} comparisons, N = {N:.0f}, {len(skipped)} samples skipped")
for e in report["internal"]["verification"]:
    if e["status"] == "ok":
        print(f"<= {e['subset']['bound_hours']:>5g} h  EER raw {e['eer_raw']:.3f}  norm {e['eer_norm']:.3f}")
for e in report["internal"]["identification"]:
    if e["status"] == "ok":
        print(f">= {e['subset']['bound_hours']:>5g} h  Rank-1 {e['rank1_raw']:.2f}  Rank-10 {e['rank10_raw']:.2f}"
              f"  ({e['probe_count']} probes, gallery {e['gallery_size']})")
print(f"report and plots in {out / 'report'}")
