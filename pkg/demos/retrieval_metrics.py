"""Scoring a re-identification system on a gallery/query split.

Half of each identity's samples go into the gallery, the other half become
queries. A few identities are held out of the gallery entirely: their
queries are "unknown" and only count toward open-set detection.
"""

import numpy as np

from activereid import (
    EmbeddingSet,
    RetrievalProblem,
    SyntheticSpec,
    evaluate_problem,
    generate_synthetic,
)

emb = generate_synthetic(
    SyntheticSpec(
        num_identities=20,
        samples_per_identity=8,
        dim=16,
        within_spread=1.0,
        between_spread=2.0,
        rng_seed=42,
    )
)

# identities id0016..id0019 never enter the gallery: they are the unknowns
held_out = {f"id{k:04d}" for k in range(16, 20)}
gallery_rows, query_rows = [], []
for i, ident in enumerate(emb.identities):
    if ident in held_out:
        query_rows.append(i)
    elif i % 2 == 0:
        gallery_rows.append(i)
    else:
        query_rows.append(i)


def subset(rows):
    return EmbeddingSet(
        [emb.ids[i] for i in rows],
        emb.vectors[rows],
        identities=[emb.identities[i] for i in rows],
    )


problem = RetrievalProblem(subset(gallery_rows), subset(query_rows))
known = int(problem.known_flags.sum())
print(f"gallery {len(gallery_rows)}, queries {len(query_rows)} "
      f"({known} known, {len(query_rows) - known} unknown)")

report = evaluate_problem(problem)

# map averages precision over every correct position of every ranking, so
# it rewards putting all of an identity's samples up front, not just one.
# minp looks at the last correct hit instead: how deep must you scroll to
# be sure you saw everything. baks averages top-1 per identity first, so
# rare identities are not drowned out by common ones.
print(f"map   {report.map:.4f}")
print(f"minp  {report.minp:.4f}")
print(f"baks  {report.baks:.4f}")
for k in sorted(report.top_k):
    print(f"top{k:<3} {report.top_k[k]:.4f}")

# Open-set AUC ignores the ranking and asks: does the best gallery match
# score separate known queries from impostors? 1.0 means perfectly.
print(f"auc   {report.auc_roc:.4f}")

print()
print(report.to_json())
