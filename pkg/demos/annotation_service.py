"""Driving the human-annotation session the way the web UI does.

The HTTP service wraps an AnnotationSession; this script exercises the
session object directly so it runs without a network. Every call shown here
maps one-to-one onto an endpoint:

    session.session_info()  GET  /api/session
    session.next_pair()     GET  /api/next-pair   (None -> HTTP 204)
    session.answer(id, lbl) POST /api/answer      {"query_id", "label"}
    session.advance()       POST /api/advance
    session.progress()      GET  /api/progress

To serve it for real:  activereid serve --embeddings emb.bin --run-dir run/
"""

import tempfile

from activereid import RunConfig, SyntheticSpec, generate_synthetic
from activereid.service import AnnotationSession

emb = generate_synthetic(
    SyntheticSpec(
        num_identities=30,
        samples_per_identity=10,
        dim=16,
        within_spread=1.52,
        between_spread=2.0,
        rng_seed=101,
    )
)
identity_of = dict(zip(emb.ids, emb.identities))

config = RunConfig(
    knn_k=10,
    dbscan_eps=0.5,
    dbscan_min_samples=5,
    budget_fraction_per_cycle=0.001,
    num_cycles=3,
    rng_seed=101,
)
run_dir = tempfile.mkdtemp(prefix="activereid-session-")
session = AnnotationSession(emb, config, run_dir=run_dir)

info = session.session_info()
print(f"session {info['session_id']}: {info['num_samples']} samples, "
      f"{info['num_cycles']} cycles, first batch budget {info['batch_budget']}")

# One pretend annotator: looks at the pair, answers from ground truth, and
# skips every ninth query to show that skips cost nothing.
seen = 0
while True:
    payload = session.next_pair()
    if payload is None:
        prog = session.advance()
        print(f"cycle advanced: now at cycle {prog['cycle']}/{prog['num_cycles']}, "
              f"answered {prog['answered']}, skipped {prog['skipped']}, "
              f"charged {prog['budget_used']}/{prog['budget_allotted']}")
        if prog["done"]:
            break
        continue
    seen += 1
    if seen % 9 == 0:
        session.answer(payload["query_id"], "skip")
        continue
    a, b = payload["a"]["id"], payload["b"]["id"]
    label = "ml" if identity_of[a] == identity_of[b] else "cl"
    session.answer(payload["query_id"], label)

final = session.progress()
print(f"\ndone: {final['answered']} answers charged, {final['skipped']} skips free")
for rec in final["history"]:
    print(f"  cycle {rec['cycle']}: asked {rec['budget_used']}, "
          f"{rec['num_clusters']} clusters, ari {rec['ari']:.3f}")
print(f"artifacts in {run_dir}")
