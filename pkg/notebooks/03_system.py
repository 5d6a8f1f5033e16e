# %% [markdown]
# # The least-squares system
#
# The normal matrix `A` and the solution-norm Gram matrix `B` are sums of
# Kronecker products of temporal and spatial factors.  The estimator
# satisfies `eta(x)^2 = x.A x - 2 b.x + ||F||^2`.

# %%
import numpy as np
from stfosls.manufactured import ExactSolution
from stfosls.mesh import refined_mesh
from stfosls.spaces import FESpaces
from stfosls.system import FoslsSystem

system = FoslsSystem(FESpaces(refined_mesh("lshape", 1), "slip"))
data = ExactSolution().problem_data()
b, c = system.assemble_rhs(data), system.data_norm_sq(data)
x = np.random.default_rng(0).standard_normal(system.spaces.n_dofs)
eta2 = system.compute_estimator(x, data).eta ** 2
print("identity defect", abs(x @ system.apply_A(x) - 2 * b @ x + c - eta2) / eta2)
