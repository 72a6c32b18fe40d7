"""Check every backward pass against central finite differences.

Builds a small conv net, feeds it a random batch, and compares analytic
gradients entry by entry with (f(x+eps) - f(x-eps)) / 2eps. In double
precision agreement to ~1e-6 relative is routine; anything near 1e-4
would mean a broken backward.
"""

import numpy as np

from memlab import Prng, build_network, grad_check

rng = Prng(2718)

for arch, shape in [
    ("flatten dense:32 relu dense:16 relu", (10,)),
    ("conv:6,3,1,1 relu maxpool:2 flatten dense:24 relu", (1, 12, 12)),
    ("conv:4,5,2 relu conv:8,3 relu flatten", (2, 16, 16)),
]:
    net = build_network(arch, shape, 5)
    net.initialize(seed=rng.next_u64())
    n = int(np.prod(shape))
    x = rng.fill_gaussian(4 * n).reshape((4,) + shape)
    y = np.array([rng.below(5) for _ in range(4)])
    err = grad_check(net, x, y)
    print(f"{arch:<55} max relative error {err:.3e}")
