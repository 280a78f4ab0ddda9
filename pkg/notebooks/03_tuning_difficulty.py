# %% [markdown]
# # Tuning difficulty as a plateau iteration
#
# Each learner is tuned for 60 trials under three master seeds. The
# best-so-far validation loss is averaged over seeds, and the plateau
# iteration marks where the remaining gain drops below 1%.

# %%
import numpy as np

from bakeoff.data import Stratified, fit_standardizer, split, standardize, synthetic_classification
from bakeoff.hpo import NATIVE_PRESET, TPEConfig, optimize, plateau_curve, preset
from bakeoff.learners import fit
from bakeoff.metrics import cross_entropy

d = synthetic_classification(1000, seed=3)
b = split(d, Stratified((0.7, 0.1, 0.2)), seed=0)
d = standardize(d, fit_standardizer(d, b.train_idx))
train, val = d.take(b.train_idx), d.take(b.val_idx)


def objective_for(kind):
    def objective(hp, seed):
        model = fit(kind, train, val, hp, seed=seed, patience=10, max_epochs=100)
        return cross_entropy(model.predict(val), val.target)

    return objective


# %%
for kind in ("gbdt", "mlp"):
    space = preset(NATIVE_PRESET[kind])
    for label, cfg in (("tpe", TPEConfig()), ("random", None)):
        runs = [optimize(objective_for(kind), space, budget=60, seed=s, config=cfg).history for s in range(3)]
        c = plateau_curve(runs, rho=0.01)
        print(f"{kind:<5s} {label:<6s} final {c.mean[-1]:.4f} ± {c.sem[-1]:.4f}  plateau at iteration {c.plateau_iteration}")
