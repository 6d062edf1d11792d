"""Encode three synthetic eyes and compare them, with and without rotation.

    python3 demos/03_encode_and_match.py
"""

from pmiris.boundary import BoundaryCircles, Circle
from pmiris.encoding import build_filter_bank, encode
from pmiris.matching import match_codes, normalize_score
from pmiris.normalization import normalize
from pmiris.synth import DecaySpec, SyntheticIdentity, render_sample

bank = build_filter_bank()
c1 = BoundaryCircles(Circle(320.0, 240.0, 45.0), Circle(322.0, 238.0, 110.0))
c2 = BoundaryCircles(Circle(300.0, 250.0, 38.0), Circle(301.0, 252.0, 105.0))


def code(identity, circles, rotation=0.0, decay=None, seed=0):
    s = render_sample(SyntheticIdentity(identity), circles, decay, seed, rotation=rotation)
    return encode(normalize(s.image, s.fine, s.circles), bank)


ref = code(1, c1)
rotated = code(1, c2, rotation=0.4, seed=1)  # 0.4 rad is about 2 grid columns
decayed = code(1, c2, decay=DecaySpec(0.6), seed=2)
other = code(2, c1, seed=3)

print(f"code: {ref.n_bits} bits, {ref.mask_bits().mean():.0%} valid")
results = {name: match_codes(ref, b) for name, b in
           (("same eye, rotated", rotated), ("same eye, decayed", decayed), ("different eye", other))}
# N stands in for the typical bit count; comparisons with more bits than N move away from 0.5
# and are not clamped, so a near-perfect match can go slightly negative
N = sum(r.n for r in results.values()) / len(results)
for name, r in results.items():
    print(f"{name:18s} hd_raw {r.hd_raw:.3f}  shift {r.best_shift:+d}  common bits {r.n}  "
          f"hd_norm(N={N:.0f}) {normalize_score(r.hd_raw, r.n, N):.3f}")
