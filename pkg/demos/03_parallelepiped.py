# %% [markdown]
# # The parallelepiped distribution
#
# Far from the sink-free region an SSP configuration lives on a box of
# offsets from a moving corner.  Toppling at site `i` moves the box one
# step along axis `i`; offsets that fall off the face are redrawn
# uniformly.  The fixed point of these pushes is a product law and its
# corner carries mass about `(I/2)^-(n-1)`.

# %%
import numpy as np

from lllsand.sandpile import SandpileParams, parallelepiped_limit, push_operator, ssp_corner_density

n, I = 3, 4
dist, rep = parallelepiped_limit(n, I)
print(f"converged in {rep.iterations} sweeps")
print(np.round(dist.weights, 4))

# %%
for k in range(1, n):
    print(f"TV change under push {k}:", 0.5 * np.abs(push_operator(dist, k).weights - dist.weights).sum())

# %%
corner = ssp_corner_density(dist, n, I, SandpileParams(2 * I, I))
print(f"max steady-state mass {corner:.4f}   vs (I/2)^-(n-1) = {(I / 2) ** -(n - 1):.4f}")
