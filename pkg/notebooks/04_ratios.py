# %% [markdown]
# # Stability ratios
#
# The ratio `sqrt(lambda_max / lambda_min)` of the pencil `(A, B)` measures
# how well the residual controls the error.  It levels off for slip
# conditions on the square and grows slowly in the other variants.

# %%
from stfosls.studies import RunConfig, run_ratios

for domain, bc, div_norm in (("square", "slip", "h1"), ("square", "slip", "l2"),
                             ("square", "noslip", "h1"), ("lshape", "slip", "h1")):
    rows = run_ratios(RunConfig(domain=domain, bc=bc, div_norm=div_norm, refinements=2))
    print(f"{domain}/{bc}/{div_norm}:", ", ".join(f"{r['ratio']:.3f}" for r in rows))
