# %% [markdown]
# # Space-time prism meshes
#
# Uniform refinement bisects every time slab once and applies two rounds
# of newest-vertex bisection in space, so level `l` has `2**l` slabs and
# mesh size `2**-l`.

# %%
from stfosls.mesh import check_conforming, mesh_size, min_angles, refined_mesh

for domain in ("square", "lshape"):
    for level in range(4):
        mesh = refined_mesh(domain, level)
        tri = mesh.space
        check_conforming(tri)  # raises on a hanging node
        print(f"{domain:6s} level {level}: {tri.n_triangles:5d} triangles, "
              f"{mesh.time.n_slabs:2d} slabs, h = {mesh_size(mesh):.4f}, "
              f"min angle {min_angles(tri).min():.2f} rad")

# %% [markdown]
# Boundary vertices are classified as interior, smooth boundary or corner.
# Slip conditions keep a tangential velocity unknown only at smooth boundary
# vertices.

# %%
import numpy as np
from stfosls.mesh import BOUNDARY, CORNER, INTERIOR

tri = refined_mesh("lshape", 1).space
kind = tri.boundary.kind
print({name: int(np.sum(kind == k)) for name, k in
       (("interior", INTERIOR), ("boundary", BOUNDARY), ("corner", CORNER))})
