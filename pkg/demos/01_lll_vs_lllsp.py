# %% [markdown]
# # LLL and its sandpile imitation
#
# Reduce a batch of knapsack-style bases with the GSO-coordinate LLL
# simulator, then run the LLL sandpile on the same inputs.  The sandpile
# throws away every mu except the subdiagonal and redraws those after each
# topple, yet the average output profiles come out close.

# %%
import numpy as np

from lllsand.experiment import ExperimentConfig, run_trials
from lllsand.inputs import GeneratorSpec
from lllsand.stats import average_shape, compare_runs

n, trials = 40, 60
spec = GeneratorSpec("knapsack", n)
lll = run_trials(ExperimentConfig("lll", spec, {"delta": 0.7}, trials, seed=1))
sp = run_trials(ExperimentConfig("lllsp", spec, {"delta": 0.7}, trials, seed=1))

# %% [markdown]
# Mean `r_i` per site.  Both profiles sit below the threshold
# `T = -log(0.7)/2 = 0.178` with a flat middle and bent ends.

# %%
a, b = average_shape([r.heights for r in lll]), average_shape([r.heights for r in sp])
print(" site   LLL     LLL-SP")
for i in range(0, n - 1, 4):
    print(f"{i + 1:5d} {a.mean_r[i]:8.4f} {b.mean_r[i]:8.4f}")

# %%
rep = compare_runs([r.heights for r in lll], [r.heights for r in sp])
print(f"mean RHF  LLL {rep.rhf_mean_a:.5f}   LLL-SP {rep.rhf_mean_b:.5f}")
print(f"KS statistic {rep.ks:.3f} (1% critical value {rep.ks_critical:.3f})")
print("mean swaps per run:", np.mean([r.steps for r in lll]), "vs", np.mean([r.steps for r in sp]))
