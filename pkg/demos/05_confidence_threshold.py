"""Trading coverage for precision with a confidence threshold.

Markers whose confidence falls below the threshold are left unlabelled.
Raising the threshold labels fewer markers but makes fewer mistakes.  The
model here is a stand-in that is usually right and unsure when wrong.
"""

import numpy as np

from markerperm.evaluate import best_error_free_fraction, curve_from_predictions

rng = np.random.default_rng(0)
frames, n = 2000, 20
targets = np.tile(np.arange(n), (frames, 1))
wrong = rng.random((frames, n)) < 0.05
labels = np.where(wrong, (targets + 1) % n, targets)
conf = np.where(wrong, rng.uniform(0.5, 0.8, (frames, n)), rng.uniform(0.6, 1.0, (frames, n)))

curve = curve_from_predictions(labels, conf, targets, np.linspace(0, 1, 11))
print("threshold  labelled  precision  accuracy")
for c in curve:
    print(f"   {c['threshold']:.1f}      {c['labelled_fraction']:.3f}     {c['precision']:.4f}    {c['accuracy']:.4f}")
print(f"\nlargest error-free labelled fraction: {best_error_free_fraction(curve):.3f}")
