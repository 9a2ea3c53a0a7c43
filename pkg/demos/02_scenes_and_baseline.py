"""
Synthetic scenes, graphs and the constant-velocity baseline
===========================================================

Builds a handful of synthetic traffic clips, looks at the inputs the model
sees (velocities and distance graphs) and scores the constant-velocity
predictor on them.
"""

import numpy as np

from gripplus import SynthSpec, build_graphs, metrics, synth_scenes, to_velocity
from gripplus.training import cv_baseline

rng = np.random.default_rng(7)

# Four motion families: straight lines, turns, lane changes, and convoys
# where followers retrace the path of the vehicle ahead.
spec = SynthSpec(num_scenes=40, agents_min=3, agents_max=6,
                 families=("cv", "turn", "lane_change", "interaction"))
clips = synth_scenes(spec, rng)
clip = clips[0]
print(f"scene {clip.scene_id}: {clip.n} agents, "
      f"{clip.t_h} history steps, {clip.t_f} future steps")

# The model consumes per-step displacements.  The first step is zero.
inp = to_velocity(clip)
print("velocities of agent 0:\n", np.round(inp.values[0], 3))

# Agents closer than d_close get an edge.  Two stacked graphs per frame:
# the self-loop identity and the normalized neighbour graph.
graphs = build_graphs(clip, d_close=25.0)
print("graph stack shape (time, 2, n, n):", graphs.g_fixed.shape)
print("neighbour graph at the last frame:\n", np.round(graphs.g_fixed[-1, 1], 3))

# The constant-velocity predictor extends the last observed step.
preds = [cv_baseline(c) for c in clips]
rep = metrics([p.positions for p in preds], [c.future for c in clips],
              [c.agent_types for c in clips], [c.future_mask for c in clips],
              clips[0].frame_rate, warn=False)
print(f"CV baseline: ADE {rep.ade['all']:.3f}  FDE {rep.fde['all']:.3f}")
for horizon, value in rep.rmse_per_horizon.items():
    print(f"  RMSE at {horizon:g}s: {value:.3f}")
