"""
N-gram posteriors and LMBR rows from a tiny n-best list
=======================================================

Two weighted hypotheses over a five-token vocabulary give a posterior
table; each history seen in the evidence then becomes one row of the
LMBR matrix.
"""

import numpy as np

import lmbrbeam as lb

vocab = lb.load_vocabulary("<s>\n</s>\na\nb\nc")
evidence = lb.make_evidence(
    [vocab.encode("a b </s>".split()), vocab.encode("a c </s>".split())],
    [0.6, 0.4],
)

# posterior = total weight of hypotheses containing the n-gram at least once
posteriors = lb.compute_ngram_posteriors(evidence)
for gram in sorted(posteriors, key=lambda g: (len(g), g)):
    print(f"{' '.join(vocab.decode(gram)):>16s}  {posteriors[gram]:.2f}")

# one row per history; theta[0] is added everywhere, theta[n] weights order n
theta = (0.1, 0.2, 0.3, 0.4, 0.0)
m = lb.lmbr_matrix_for(evidence, vocab, theta)
print(f"\n{m.n_rows} rows (including the default row)")
np.set_printoptions(precision=2, suppress=True)
for ctx, r in sorted(m.history_index.items(), key=lambda kv: kv[1]):
    print(f"{' '.join(vocab.decode(ctx)) or '(empty)':>12s}  {m.rows[r]}")

# a history the evidence never produced falls back to its longest known suffix
row = lb.lookup_history_rows(m, [vocab.encode(["c", "a"])])[0]
print("\n(c, a) ->", row, "same as (a):", np.array_equal(row, m.rows[m.history_index[(2,)]]))
