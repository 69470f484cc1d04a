"""Train a small labelling network on synthetic subjects and label unseen ones.

This is a scaled-down run (a few minutes on one core).  The acceptance
suite trains the full-size model.
"""

import logging
import time

import numpy as np

from markerperm import NetworkConfig, TrainConfig, label_frame
from markerperm.evaluate import eval_frames
from markerperm.synthdata import (generate_subject_sequences, normalized_frameset,
                                  occlude_frameset, shuffle_frameset)

logging.basicConfig(level=logging.INFO, format="%(message)s")
N = 20


def frames_for(subjects, stride, shuffles, rng, occlude=False):
    seqs = [s for k in subjects for s in generate_subject_sequences(N, k, 960)]
    fs = shuffle_frameset(normalized_frameset(seqs, stride), rng, shuffles)
    return occlude_frameset(fs, rng, 5) if occlude else fs


rng = np.random.default_rng(0)
train_set = frames_for(range(1, 13), 12, 4, rng, occlude=True)
val_set = frames_for(range(13, 17), 24, 2, rng, occlude=True)
test_set = frames_for(range(17, 21), 24, 2, rng)
print(f"{len(train_set)} training frames, {len(test_set)} test frames")

from markerperm import train  # noqa: E402

t0 = time.perf_counter()
ckpt = train(train_set, val_set, NetworkConfig(N, hidden_width=256, seed=0),
             TrainConfig(lr_initial=1e-3, epochs=8, dtype="float32", seed=0))
print(f"trained in {time.perf_counter() - t0:.0f} s")

acc = eval_frames(ckpt, test_set, range(6), np.random.default_rng(1))
for k, a in acc.items():
    print(f"  {k} occluded markers: {100 * a:.1f}% of markers labelled correctly")

result = label_frame(test_set.frame(0), ckpt)
print("\nfirst test frame, predicted:", result.labels.tolist())
print("first test frame, truth:    ", test_set.targets[0].tolist())
