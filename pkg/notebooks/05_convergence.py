# %% [markdown]
# # Convergence on the manufactured solution
#
# All error quantities and the estimator decay like `dofs**(-1/3)`, the
# optimal rate for lowest-order space-time elements.

# %%
import numpy as np
from stfosls.studies import RunConfig, run_convergence

rows = run_convergence(RunConfig(domain="square", refinements=3))
for r in rows:
    print(r["level"], r["dofs"], f"eta {r['eta']:.4f}", f"err_u {r['err_u']:.4f}",
          f"iterations {r['iterations']}")

# %%
dofs = np.array([r["dofs"] for r in rows[1:]], float)
for key in ("eta", "err_u", "err_w", "err_pde", "err_p"):
    vals = np.array([r[key] for r in rows[1:]])
    print(key, "slope", round(np.polyfit(np.log(dofs), np.log(vals), 1)[0], 3))
