"""Fit pupil and limbic circles to a synthetic coarse mask and compare with the truth.

    python3 demos/02_boundary_fit.py
"""

import numpy as np

from pmiris.boundary import fit_mask, mask_edges
from pmiris.synth import DecaySpec, SyntheticIdentity, render_sample
from pmiris.boundary import BoundaryCircles, Circle

truth = BoundaryCircles(Circle(318.0, 244.0, 46.0), Circle(321.0, 241.0, 112.0))
for level in (0.0, 0.5):
    s = render_sample(SyntheticIdentity(3), truth, DecaySpec(level), rng_seed=1)
    edges = mask_edges(s.coarse)
    debug = {}
    fit = fit_mask(s.coarse, debug=debug)
    print(f"decay {level}: {len(edges)} edge pixels")
    for name, f, t in (("pupil", fit.pupil, truth.pupil), ("limbic", fit.limbic, truth.limbic)):
        err = np.max(np.abs([f.cx - t.cx, f.cy - t.cy, f.r - t.r]))
        print(f"  {name:6s} fit ({f.cx:.0f}, {f.cy:.0f}, r={f.r:.0f})  truth ({t.cx:.0f}, {t.cy:.0f}, r={t.r:.0f})"
              f"  max error {err:.1f} px")
    print("  limbic runner-up votes:", [c["votes"] for c in debug["limbic_candidates"][:3]])
