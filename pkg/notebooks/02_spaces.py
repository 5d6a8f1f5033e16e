# %% [markdown]
# # Finite element spaces
#
# Velocity: continuous piecewise linears enriched with divergence-carrying
# edge bubbles on a Powell-Sabin split.  Stress: a symmetric Clough-Tocher
# type element with normal-continuous rows.  Pressure: piecewise constants.

# %%
import numpy as np
from stfosls.mesh import refined_mesh
from stfosls.spaces import FESpaces, quasi_interpolate_velocity

for bc in ("slip", "noslip"):
    sp = FESpaces(refined_mesh("square", 2), bc)
    print(bc, "velocity", sp.velocity.n_dofs, "stress", sp.stress.n_dofs,
          "pressure", sp.pressure.n_dofs, "space-time total", sp.n_dofs)

# %% [markdown]
# The quasi-interpolant commutes with the divergence: on each triangle the
# divergence of the interpolant is the mean divergence of the field.

# %%
sp = FESpaces(refined_mesh("square", 2), "slip")
v = lambda xy: np.stack([xy[:, 0] * (1 - xy[:, 0]), 2 * xy[:, 1] * (1 - xy[:, 1])], 1)
div_v = lambda xy: (1 - 2 * xy[:, 0]) + 2 * (1 - 2 * xy[:, 1])
q = sp.quadrature(4)
d = sp.velocity.evaluate(q)["div"] @ quasi_interpolate_velocity(sp, v)
mean = np.bincount(q.tri, q.w * div_v(q.xy)) / sp.tri.areas
print("max deviation", np.abs(d - mean[q.tri]).max())
