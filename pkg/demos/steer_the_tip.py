"""Steering the active tip with four cables.

Walks through the constant-curvature map (cable pull -> bend angles), lets the
discrete rod settle under a few commands and compares its tip with the continuous
arc. Then asks the inverse map for the insertion and bend that reach a point.

    python3 demos/steer_the_tip.py
"""
import numpy as np

from endonav.endoscope import (ActuationState, Rod, cable_to_target_curvature, cc_inverse, cc_tip,
                               tip_bend_angle)
from endonav.env import SceneConfig

model = SceneConfig().endoscope
d = model.cable_moment_arm
base, axis, e1 = np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])

print(f"rod: {model.n_nodes} nodes, active segment {model.active_length} mm, cable arm {d} mm")
print(f"cable travel limit pi*d = {model.cable_limit:.2f} mm (a 90 degree bend)\n")

# antagonistic pairs: pulling cable 1 by x releases cable 3 by x
for deg in (0, 30, 60, 90):
    th = np.radians(deg)
    L = np.array([d * th, 0.0, -d * th, 0.0]) + 0.0  # no negative zeros in the printout
    ty, tz = cable_to_target_curvature(L, model)
    rod = Rod(model, base, axis, e1)
    rod.reset(10.0)
    rod.settle(ActuationState(tuple(L), 10.0), 0.02, 1500)
    arc = cc_tip(model, base, axis, e1, 10.0, ty, tz)
    print(f"cables {np.round(L, 2)} -> target {np.degrees(ty):5.1f} deg, "
          f"settled {np.degrees(tip_bend_angle(rod.state, model)):5.1f} deg, "
          f"tip off the arc by {np.linalg.norm(rod.x[-1] - arc):.2f} mm")

# both pairs saturated still bends by 90 degrees in total, along the diagonal
L = np.array([1, 1, -1, -1]) * model.cable_limit
rod = Rod(model, base, axis, e1)
rod.reset(10.0)
rod.settle(ActuationState(tuple(L), 10.0), 0.02, 1500)
print(f"\nboth pairs at the limit: {np.degrees(tip_bend_angle(rod.state, model)):.1f} deg total bend")

goal = cc_tip(model, base, axis, e1, 14.0, 0.5, -0.3)
sol = cc_inverse(model, base, axis, e1, goal)
print(f"\ninverse map for {np.round(goal, 2)}: insertion {sol[0]:.2f} mm, "
      f"bend ({sol[1]:.3f}, {sol[2]:.3f}) rad")
