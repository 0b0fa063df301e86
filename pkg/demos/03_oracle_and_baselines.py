"""Dense-matrix ground truth, and two projections that fall short.

Run: python demos/03_oracle_and_baselines.py
"""
import numpy as np

from parafac.convops import ConvSpec, build_orthogonal, circulant_oracle, rko_project, svcm_project, verify_orthogonality
from parafac.polymat import MatrixSeq

# Materialize the whole operator for a small case and check C^T C = I.
spec = build_orthogonal("strided_down", 2, rate=2, degrees=(1, 1), seed=0)
c, residual = circulant_oracle(spec, 8)
print("operator", c.shape, "max |C^T C - I| =", residual)

rng = np.random.default_rng(1)
raw = MatrixSeq.from_taps(rng.standard_normal((3, 8, 8)) / np.sqrt(24), start=-1)

# Clip singular values to one on a 16-point grid: exact on that grid, but the
# result has 16 taps. Cropping back to 3 taps loses orthogonality.
full = svcm_project(raw, 16)
masked = svcm_project(raw, 16, mask_to_support=True)
for name, f in (("clipped", full), ("clipped+masked", masked)):
    rep = verify_orthogonality(ConvSpec("standard", (f,)), 16, trials=50)
    print(f"{name:>15}: taps {f.length:2d}, mean dev {rep.ratio_dev_mean:+.3e}")

# Orthogonalizing the reshaped kernel matrix does not make the conv orthogonal.
rep = verify_orthogonality(ConvSpec("standard", (rko_project(raw),)), 16, trials=50)
print(f"{'reshaped-kernel':>15}: mean dev {rep.ratio_dev_mean:+.3e}")
