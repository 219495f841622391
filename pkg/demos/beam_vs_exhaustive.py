"""
Beam decoding against brute force
=================================

With the beam as wide as the whole hypothesis space, batched beam decoding
fused with LMBR gains finds the exact argmax. Narrower beams can only do
as well or worse.
"""

import numpy as np

import lmbrbeam as lb
from lmbrbeam.oracle import exhaustive_decode, score_hypothesis_eq2
from lmbrbeam.synthetic import random_evidence, random_recorded_scorer

rng = np.random.default_rng(42)
V, T = 4, 4
scorer = random_recorded_scorer(rng, V, T)
evidence = random_evidence(rng, V, 3, T + 1)
source = [2, 3]

cfg = lb.DecoderConfig(beam_size=V**T, lam=0.5)
matrix = lb.lmbr_matrix_for(evidence, V, cfg.theta)

best, best_score = exhaustive_decode(source, scorer, evidence, cfg)
print("exhaustive:", best, round(best_score, 6))

for B in (1, 2, 4, 16, V**T):
    r = lb.decode(source, scorer, matrix, cfg.with_(beam_size=B))
    # recompute the fused score term by term as a cross-check
    check = score_hypothesis_eq2(r.tokens, scorer, source, evidence, 0.5, cfg.theta)
    print(f"B={B:3d}: {r.tokens}  score={r.score:.6f}  recomputed={check:.6f}")
