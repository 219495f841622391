"""
When no EOS survives the beam
=============================

A scorer that always ranks EOS below every word never lets a finished
hypothesis into a small beam. The decoder still returns an EOS-terminated
result, taken from the best EOS extension seen at any step.
"""

import numpy as np

import lmbrbeam as lb

V = 5
steps = []
for depth, penalty in enumerate((-40.0, -30.0, -20.0, -3.0)):
    rows = np.zeros((V**depth, V))
    rows[:, 1] = penalty
    steps.append(rows - np.logaddexp.reduce(rows, axis=1, keepdims=True))
scorer = lb.RecordedScorer(V, steps)

for B in (1, 2):
    r = lb.decode([2], scorer, cfg=lb.DecoderConfig(beam_size=B))
    print(f"B={B}: tokens={r.tokens} score={r.score:.3f} fallback_used={r.stats.fallback_used}")

# with B=4 the first step keeps all four candidates, EOS included, so a
# finished hypothesis exists and the fallback stack is never consulted,
# even though it holds a better-scoring candidate
r = lb.decode([2], scorer, cfg=lb.DecoderConfig(beam_size=4))
print(f"B=4: tokens={r.tokens} score={r.score:.3f} fallback_used={r.stats.fallback_used}")
