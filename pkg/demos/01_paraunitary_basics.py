"""Paraunitary filters from orthogonal matrices.

Run: python demos/01_paraunitary_basics.py
"""
import numpy as np

from parafac.ortho import SkewParams, exp_skew, ortho_residual
from parafac.paraunitary import build_1d, init_reduced, random_factors
from parafac.polymat import is_paraunitary, paraconjugate, seq_mul

rng = np.random.default_rng(0)

# An orthogonal matrix from 6 free parameters (4x4 skew-symmetric generator).
q = exp_skew(SkewParams.random(4, rng))
print("Q^T Q - I:", ortho_residual(q))

# A paraunitary filter with taps n = -2 .. 1: two anticausal V-blocks, Q,
# then one causal V-block.
factors = random_factors(4, lo=2, hi=1, seed=rng)
h = build_1d(factors)
print("filter:", h)
ok, res = is_paraunitary(h)
print("paraunitary:", ok, "residual", res)

# The tap-domain statement: sum_n h[n]^T h[n + k] = delta[k] I.
auto = seq_mul(paraconjugate(h), h)
# Lags at rounding level are trimmed, so only lag 0 survives.
print("surviving lags:", [int(n) for n in auto.indices])
print("lag 0 - I:", np.abs(auto.tap(0) - np.eye(4)).max())

# Choosing U_{-l} = Q U_l collapses the whole product back to Q, so any
# orthogonal initializer also initializes a long filter.
collapsed = build_1d(init_reduced(factors.q, factors.pos_factors))
print("collapsed support:", collapsed, "| center - Q:", np.abs(collapsed.tap(0) - factors.q).max())
