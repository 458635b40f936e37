# %% [markdown]
# # Motions as a 3D+t graph
#
# A motion of T frames over a J-joint skeleton becomes a graph with T*J nodes.
# Bones connect joints inside a frame and every joint is linked to itself in
# the next frame. Multiplying positions by the graph Laplacian gives each
# node's differential coordinates: where it sits relative to its neighbours.

# %%
import numpy as np

from lapmo import LaplacianVariant, MotionSequence, Skeleton, build_graph, build_laplacian, diff_coords
from lapmo.synth import h36m_preset

# %% [markdown]
# Two joints, two frames. Node `t*J + j` is joint j at frame t.

# %%
chain2 = Skeleton(parents=(None, 0))
g = build_graph(chain2, T=2)
print("spatial edges", g.spatial_edges.tolist())
print("temporal edges", g.temporal_edges.tolist())

L = build_laplacian(g, LaplacianVariant.COMBINATORIAL)
print(L.toarray())

# %%
seq = MotionSequence(chain2, fps=50.0, positions=[[[0, 0, 0], [1, 0, 0]], [[0, 0, 1], [1, 0, 1]]])
print(diff_coords(L, seq))

# %% [markdown]
# The random-walk variant divides by degree, so each row becomes "position
# minus mean of neighbours". Both annihilate constant positions.

# %%
Lrw = build_laplacian(g, "rw")
print(Lrw.toarray())
print(np.abs(Lrw @ np.ones(4)).max(), np.abs(L @ np.ones(4)).max())

# %% [markdown]
# The 17-joint humanoid over three frames: 16 bones per frame and 17 temporal
# links per consecutive pair.

# %%
g17 = build_graph(h36m_preset().skeleton(), T=3)
print(len(g17.spatial_edges), len(g17.temporal_edges), "nnz:", build_laplacian(g17, "comb").nnz)
