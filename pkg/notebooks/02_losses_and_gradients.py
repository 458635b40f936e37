# %% [markdown]
# # Losses and their gradients
#
# Every loss returns a value and the gradient with respect to the estimate.
# All three are means of per-row Euclidean norms, so their gradients are unit
# residual directions scaled by 1/N.

# %%
import numpy as np

from lapmo import LossConfig, LossMode, combined_loss, laplacian_loss, motion_loss, motion_laplacian, position_loss
from lapmo.gradcheck import central_difference, relative_error
from lapmo.synth import SynthConfig, generate

# %%
gt = generate(SynthConfig(T=16), 1)[0]
rng = np.random.default_rng(0)
est = gt.with_positions(gt.positions + rng.normal(0, 10, gt.positions.shape))

L = motion_laplacian(gt.skeleton, gt.T)
for name, lv in [
    ("position", position_loss(est, gt)),
    ("laplacian", laplacian_loss(est, gt, L)),
    ("motion", motion_loss(est, gt)),
]:
    print(f"{name:10s} {lv.value:8.3f}")

# %% [markdown]
# Shifting the whole estimate leaves the Laplacian and motion losses alone,
# since both only look at differences between positions. The position loss
# notices.

# %%
shifted = est.with_positions(est.positions + [30.0, -5.0, 12.0])
print(position_loss(shifted, gt).value - position_loss(est, gt).value)
print(laplacian_loss(shifted, gt, L).value - laplacian_loss(est, gt, L).value)

# %% [markdown]
# The combined objective adds `alpha` times the Laplacian term (or `lam`
# times the motion term) to the position loss. A finite-difference check on
# one instance:

# %%
cfg = LossConfig(alpha=0.5)
f = lambda x: combined_loss(x, gt.positions, cfg, LossMode.P_PLUS_LAP, skeleton=gt.skeleton)
x0 = est.positions.copy()
numeric = central_difference(lambda x: f(x).value, x0.copy())
print("relative error", relative_error(f(x0).grad, numeric))

# %% [markdown]
# `lapmo gradcheck --loss combined --trials 100` runs the same comparison on
# random skeletons and prints PASS or FAIL at 1e-4.
