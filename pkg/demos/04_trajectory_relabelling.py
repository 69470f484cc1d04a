"""Repairing per-frame mistakes with trajectory voting.

A tracked marker keeps its identity between gaps, so all frames of one
trajectory should share a label.  Each candidate label gets the score
``|T|**q * (sum c**p)**(1/p)`` over the frames where it was predicted with
confidence ``c``; the best one wins.
"""

import numpy as np

from markerperm import ScoringConfig, relabel_trajectory, score_label
from markerperm.trajlabel import Trajectory

traj = Trajectory(0, 0, 3, np.zeros((4, 3)), rows=np.zeros(4, dtype=int))
# three hesitant votes for label 4, one confident vote for label 9
traj.per_frame_labels = [(4, 0.55), (4, 0.55), (4, 0.55), (9, 0.99)]

for cfg in (ScoringConfig(0, 0), ScoringConfig(1, 0), ScoringConfig(1, -1), ScoringConfig(2, -0.5)):
    scores = {lab: round(score_label(traj, lab, cfg), 4) for lab in (4, 9)}
    winner, _ = relabel_trajectory(traj, cfg)
    print(f"p={cfg.p:g} q={cfg.q:g}: scores {scores} -> label {winner}")

print("\np=0,q=0 counts votes; p=1,q=-1 averages confidence; p=2,q=-1/2 is the")
print("root-mean-square confidence, which rewards consistent, confident frames.")
