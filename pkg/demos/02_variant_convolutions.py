"""Standard, dilated, strided and group convolutions that preserve norms.

Run: python demos/02_variant_convolutions.py
"""
import numpy as np

from parafac.convops import build_orthogonal, check_constraints, verify_orthogonality
from parafac.errors import InvalidInputError

layers = {
    "standard": build_orthogonal("standard", 16, degrees=(1, 1), seed=1),
    "dilated x4": build_orthogonal("dilated", 16, rate=4, degrees=(1, 1), seed=2),
    "down x2": build_orthogonal("strided_down", 16, rate=2, degrees=(1, 1), seed=3),
    "up x2": build_orthogonal("strided_up", 16, rate=2, degrees=(1, 1), seed=4),
    "4 groups": build_orthogonal("standard", 16, groups=4, degrees=(1, 1), seed=5),
}

x = np.random.default_rng(0).standard_normal((64, 16))
for name, layer in layers.items():
    y = layer(x)
    print(f"{name:>10}: in {x.shape} -> out {y.shape}, |y|/|x| - 1 = {np.linalg.norm(y) / np.linalg.norm(x) - 1:+.1e}")

# Same layer, single precision: the deviation lands on the float32 roundoff.
rep = verify_orthogonality(layers["standard"], 64, trials=50, dtype="f32")
print("f32 mean |dev|:", rep.ratio_dev_abs_mean, "(2^-24 =", 2.0 ** -24, ")")

# Channel bookkeeping is strict. Up-sampling by 16 from 64 channels leaves 4
# output channels, which cannot be split into 16 groups.
try:
    check_constraints("strided_up", 64, rate=16, groups=16)
except InvalidInputError as exc:
    print("rejected:", exc)
