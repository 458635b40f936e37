# %% [markdown]
# # Position, velocity and acceleration errors
#
# MPJPE aligns roots frame by frame before comparing. MPJVE and MPJAccE work
# on raw first and second differences, so they catch jitter that per-frame
# position error can hide.

# %%
import numpy as np

from lapmo import acceleration, evaluate_pair, mpjacce, mpjpe_protocol1, mpjve
from lapmo.metrics import aggregate_reports
from lapmo.report import compare_reports
from lapmo.synth import SynthConfig, generate

# %%
t = np.arange(5.0)
quad = np.stack([t**2, 0 * t, 0 * t], axis=-1)[:, None, :]
print(acceleration(quad)[:, 0])
print(acceleration(quad, printed_form=True)[:, 0], "<- P[t+2] - 2P[t+1] - P[t], kept only for comparison")

# %% [markdown]
# Two estimates with similar position error: one has a smooth bias, the
# other frame-to-frame noise.

# %%
gt = generate(SynthConfig(T=64), 1)[0]
rng = np.random.default_rng(1)
biased = gt.positions + np.array([0.0, 0.0, 8.0]) * np.linspace(0, 1, gt.J)[None, :, None]
jittery = gt.positions + rng.normal(0, 4.0, gt.positions.shape)
for name, P in [("biased", biased), ("jittery", jittery)]:
    print(f"{name:8s} mpjpe {mpjpe_protocol1(P, gt):6.2f}  mpjve {mpjve(P, gt):5.2f}  mpjacce {mpjacce(P, gt):5.2f}")

# %% [markdown]
# Reports aggregate per action first, then average actions without weights.

# %%
rows = [
    (name, aggregate_reports([evaluate_pair(gt.with_positions(P), gt, "synth")]))
    for name, P in [("biased", biased), ("jittery", jittery)]
]
for metric in ("mpjpe", "mpjve", "mpjacce"):
    print(metric)
    print(compare_reports(rows, metric))
