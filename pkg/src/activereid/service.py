"""HTTP annotation service: humans answer the sampled pairs over JSON.

One session drives the loop for one run directory. Queries are drawn
lazily through the same batch drawer as the in-process loop, so a recorded
answer sequence replayed through the pipeline reproduces the service's
state exactly. Answers are charged against the budget; skips are free and
followed by a replacement draw while the pool and budget allow.
"""

from __future__ import annotations

import os
import threading

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, Response
from fastapi.staticfiles import StaticFiles

from .errors import ContradictionError
from .model import CANNOT_LINK, MUST_LINK, Constraint, EmbeddingSet, RunConfig
from .pipeline import (
    BatchDrawer,
    RunDirWriter,
    finalize_cycle,
    initial_state,
    prepare_cycle,
    refresh_hook_from_config,
)

LABEL_TO_RELATION = {"ml": MUST_LINK, "cl": CANNOT_LINK}

PLACEHOLDER_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>annotation service</title></head>
<body><h1>Annotation service is running</h1>
<p>No UI bundle is installed. The JSON API lives under <code>/api/</code>:
session, next-pair, answer, advance, progress.</p></body></html>
"""


class AnnotationSession:
    """Serialized session state for one annotator working one run."""

    def __init__(self, emb: EmbeddingSet, config: RunConfig, run_dir=None, session_id=None):
        config.validate()
        self.emb = emb
        self.config = config
        self.state = initial_state(emb)
        self.session_id = session_id or f"run-{config.rng_seed}"
        self.writer = None
        if run_dir is not None:
            self.writer = RunDirWriter(run_dir, emb.ids)
            self.writer.write_config(config)
        self.lock = threading.Lock()
        self.done = False
        self.pending: dict | None = None
        self.issued: dict[str, object] = {}  # query_id -> PairKey
        self.answered: dict[str, str] = {}
        self.skipped: set[str] = set()
        self.queries: list[dict] = []
        self._qcounter = 0
        self._begin_cycle()

    def _begin_cycle(self) -> None:
        self.plan = prepare_cycle(self.state, self.config)
        self.drawer = BatchDrawer(self.plan.entries, self.plan.probs, self.plan.rng)
        self.queries = []
        self.pending = None

    def _uri(self, index: int):
        return self.emb.image_uris[index] if self.emb.image_uris is not None else None

    def _pending_payload(self) -> dict:
        pend = self.pending
        pair = pend["pair"]
        return {
            "query_id": pend["query_id"],
            "a": {"id": self.emb.ids[pair.a], "image_uri": self._uri(pair.a)},
            "b": {"id": self.emb.ids[pair.b], "image_uri": self._uri(pair.b)},
            "probability": pend["probability"],
        }

    def next_pair(self) -> dict | None:
        """Current pending query, or a fresh draw; None when the batch is done."""
        with self.lock:
            if self.done:
                return None
            if self.pending is not None:
                return self._pending_payload()
            if len(self.queries) >= self.plan.budget:
                return None
            item = self.drawer.draw(self.state.store)
            if item is None:
                return None
            pair, origin, prob = item
            query_id = f"c{self.state.cycle}-q{self._qcounter}"
            self._qcounter += 1
            self.issued[query_id] = pair
            self.pending = {
                "query_id": query_id,
                "pair": pair,
                "origin": origin,
                "probability": prob,
            }
            return self._pending_payload()

    def answer(self, query_id: str, label: str) -> dict:
        """Apply one human answer; raises HTTPException on conflicts."""
        if label not in ("ml", "cl", "skip"):
            raise HTTPException(400, f"label must be ml, cl, or skip, not {label!r}")
        with self.lock:
            if query_id not in self.issued:
                raise HTTPException(404, f"unknown query_id {query_id!r}")
            current = self.pending["query_id"] if self.pending is not None else None
            if query_id != current:
                pair = self.issued[query_id]
                relation = LABEL_TO_RELATION.get(label)
                known = self.state.store.relation_of(pair)
                if relation is not None and known not in ("unknown", relation):
                    raise HTTPException(
                        409, f"{label} on {query_id} contradicts the answers so far"
                    )
                raise HTTPException(409, f"query {query_id} was already resolved")

            if label == "skip":
                self.skipped.add(query_id)
                self.pending = None
                return self._progress_locked()

            pair = self.pending["pair"]
            constraint = Constraint(pair, LABEL_TO_RELATION[label], "oracle", self.state.cycle)
            try:
                self.state.store.add(constraint)
            except ContradictionError as exc:
                raise HTTPException(409, str(exc)) from None
            self.answered[query_id] = label
            self.queries.append(
                {
                    "a": pair.a,
                    "b": pair.b,
                    "origin": self.pending["origin"],
                    "probability": self.pending["probability"],
                    "cycle": self.state.cycle,
                }
            )
            self.pending = None
            return self._progress_locked()

    def advance(self) -> dict:
        """Close the cycle: refine, persist, refresh, start the next batch."""
        with self.lock:
            if self.done:
                return self._progress_locked()
            if self.pending is not None:
                raise HTTPException(423, "an unanswered query is outstanding")
            last = self.state.cycle >= self.config.num_cycles - 1
            hook = None if last else refresh_hook_from_config(self.config)
            finalize_cycle(
                self.state,
                self.config,
                self.plan,
                self.queries,
                self.drawer.skipped_by_closure,
                hook,
            )
            if self.writer:
                self.writer.write_cycle(self.state)
            if last:
                self.done = True
                if self.writer:
                    self.writer.finish(self.state)
            else:
                self._begin_cycle()
            return self._progress_locked()

    def _progress_locked(self) -> dict:
        live_allotted = self.state.budget_allotted_pairs
        live_used = self.state.budget_used_pairs
        batch_budget = 0
        batch_used = 0
        if not self.done:
            batch_budget = self.plan.budget
            batch_used = len(self.queries)
            live_allotted += batch_budget
            live_used += batch_used
        return {
            "cycle": self.state.cycle,
            "num_cycles": self.config.num_cycles,
            "budget_allotted": live_allotted,
            "budget_used": live_used,
            "batch_budget": batch_budget,
            "batch_used": batch_used,
            "answered": len(self.answered),
            "skipped": len(self.skipped),
            "outstanding": 0 if self.pending is None else 1,
            "done": self.done,
            "history": [
                {k: v for k, v in rec.items() if k != "queries"} for rec in self.state.history
            ],
        }

    def progress(self) -> dict:
        with self.lock:
            return self._progress_locked()

    def session_info(self) -> dict:
        with self.lock:
            info = {
                "session_id": self.session_id,
                "num_samples": self.emb.n,
                "pool_os_size": len(self.plan.pool_os) if not self.done else 0,
                "pool_us_size": len(self.plan.pool_us) if not self.done else 0,
            }
            info.update(self._progress_locked())
            return info


def create_app(session: AnnotationSession, static_dir=None) -> FastAPI:
    app = FastAPI(title="annotation service")

    @app.get("/api/session")
    def get_session():
        return session.session_info()

    @app.get("/api/next-pair")
    def next_pair():
        payload = session.next_pair()
        if payload is None:
            return Response(status_code=204)
        return payload

    @app.post("/api/answer")
    def post_answer(body: dict):
        query_id = body.get("query_id")
        label = body.get("label")
        if not isinstance(query_id, str) or not isinstance(label, str):
            raise HTTPException(400, "body needs string fields query_id and label")
        return session.answer(query_id, label)

    @app.post("/api/advance")
    def post_advance():
        return session.advance()

    @app.get("/api/progress")
    def get_progress():
        return session.progress()

    if static_dir is not None and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/")
        def index():
            return HTMLResponse(PLACEHOLDER_PAGE)

    return app


def serve(session: AnnotationSession, host: str, port: int, static_dir=None) -> None:
    import uvicorn

    uvicorn.run(create_app(session, static_dir), host=host, port=port, log_level="warning")
