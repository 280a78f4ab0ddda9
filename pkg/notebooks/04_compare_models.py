# %% [markdown]
# # Comparing models across datasets
#
# Relative deterioration is the geometric mean, over a model's unseen
# datasets, of its loss over the best loss on that dataset. Pairwise
# Friedman tests say which pairs differ in rank. The grid below is a made-up
# illustration with four models on six datasets.

# %%
import numpy as np

from bakeoff.metrics import ComparisonMatrix, friedman_test
from bakeoff.report import compare

models = ("boosted", "soft_trees", "mlp", "ensemble")
datasets = ("d1", "d2", "d3", "d4", "d5", "d6")
losses = np.array([
    [0.210, 0.310, 0.560, 0.021, 0.806, 490.2],
    [0.212, 0.415, 0.683, 0.022, 0.921, 488.6],
    [0.223, 0.351, 0.679, 0.018, 0.979, 493.8],
    [0.205, 0.305, 0.550, 0.017, 0.790, 486.0],
])
# datasets each model was not originally tuned on
unseen = np.array([
    [False, False, True, True, True, True],
    [True, True, False, False, True, True],
    [True, True, True, True, False, False],
    [True, True, True, True, True, True],
])
matrix = ComparisonMatrix(losses, unseen, models, datasets)

# %%
print(compare(matrix).text)
r = friedman_test(losses)
print(f"all-model Friedman: chi2 {r.statistic:.2f}, p {r.p_value:.4f}, mean ranks {np.round(r.mean_ranks, 2)}")
