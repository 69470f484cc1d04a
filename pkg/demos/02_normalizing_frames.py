"""Making a frame independent of where the subject stands and how big they are.

A synthetic subject is rendered twice: once as generated and once moved,
turned and scaled.  After normalization both frames are identical, and
occluded markers do not disturb the result.
"""

import numpy as np

from markerperm import MarkerFrame, denormalize_frame, normalize_frame
from markerperm.synthdata import generate_subject_sequences

seq = generate_subject_sequences(20, subject_seed=3, n_frames=30, actions=("walk",))[0]
frame = seq.frames()[10]

angle = 1.1
rot = np.array([[np.cos(angle), -np.sin(angle), 0], [np.sin(angle), np.cos(angle), 0], [0, 0, 1]])
moved = MarkerFrame(1.3 * frame.positions @ rot.T + [2500.0, -400.0, 15.0], frame.occluded)

a, rec = normalize_frame(frame)
b, _ = normalize_frame(moved)
print("max difference after normalization: %.2e" % np.abs(a.positions - b.positions).max())
print("normalized range per axis:", a.positions.min(0), a.positions.max(0))

occ = frame.occluded.copy()
occ[[4, 9]] = True
hidden, _ = normalize_frame(MarkerFrame(frame.positions, occ))
print("occluded markers sit at the placeholder:", hidden.positions[[4, 9]].tolist())

back = denormalize_frame(a, rec)
print("round trip error (mm): %.2e" % np.abs(back.positions - frame.positions).max())
