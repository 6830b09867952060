"""Session-oriented HTTP service for the weighing workflow.

Sessions walk the weighing targets depth-first: undecided targets preview
with equal weighing by default, previews never mutate state, commits
advance the cursor, and a completed session carries its final consistency
report. Per-session mutations are serialized; previews are pure engine
calls and may run concurrently.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse

from . import consistency, engine, weighing
from .errors import FanoutGuardError, UnknownRelation, UnknownSession, ValidationFailed
from .join_graph import JoinGraph, edge_to_json
from .loader import Bundle, bundle_from_payload, load_bundle
from .semantic_model import ExploratoryQuery, QueryPlan, predicate_from_json, resolve
from .semiring import sr_finalize
from .weighing import strategy_from_spec, strategy_to_spec

DEFAULT_SAMPLE_N = 100


@dataclass
class Session:
    id: str
    bundle: Bundle
    query: ExploratoryQuery
    plan: QueryPlan
    decided: dict = field(default_factory=dict)  # relation -> strategy spec dict
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    token_replies: dict = field(default_factory=dict)  # request token -> response

    @property
    def targets(self) -> list:
        return self.plan.targets

    @property
    def cursor(self) -> int:
        for i, t in enumerate(self.targets):
            if t.relation not in self.decided:
                return i
        return len(self.targets)

    @property
    def complete(self) -> bool:
        return self.cursor >= len(self.targets)

    @property
    def frontier(self) -> Optional[str]:
        return None if self.complete else self.targets[self.cursor].relation

    def weight_tables(self, override: Optional[dict] = None) -> dict:
        """Decided tables, equal-weighing defaults for undecided targets,
        and optionally one hypothetical override {relation: strategy spec}."""
        override = override or {}
        tables = {}
        for t in self.targets:
            spec = override.get(t.relation) or self.decided.get(t.relation) or {"type": "equal"}
            strategy = strategy_from_spec(spec)
            rel = self.bundle.db[t.relation]
            tables[t.relation] = weighing.build(strategy, rel, t.join_key)
        return tables


def render_data(graph: JoinGraph, plan: QueryPlan, frontier: Optional[str]) -> dict:
    """What the UI draws: node roles (base / frontier / other) and edges
    labeled with cardinality and subtree membership."""
    base = set(plan.query.base.relations)
    in_subtree = {(s.edge.left, s.edge.right) for s in plan.steps}
    nodes = []
    for n in graph.nodes:
        role = "base" if n in base else ("frontier" if n == frontier else "other")
        nodes.append({"name": n, "role": role, "is_fact": n in graph.fact_tables})
    edges = []
    for e in graph.edges:
        doc = edge_to_json(e)
        doc["in_subtree"] = (e.left, e.right) in in_subtree
        edges.append(doc)
    return {"nodes": nodes, "edges": edges}


def session_summary(session: Session) -> dict:
    plan = session.plan
    base_result = engine.evaluate(
        consistency.base_only_plan(plan), session.bundle.db, {}
    )
    doc = {
        "id": session.id,
        "graph_id": session.bundle.id,
        "state": "complete" if session.complete else "weighing",
        "metric": plan.metric.name,
        "group_by": list(plan.group_by),
        "targets": [
            {"relation": t.relation, "join_key": list(t.join_key)} for t in session.targets
        ],
        "cursor": session.cursor,
        "frontier": session.frontier,
        "decided": dict(session.decided),
        "base_total": sr_finalize(base_result.groups[()]),
        "join_graph": render_data(session.bundle.graph, plan, session.frontier),
    }
    if session.complete:
        report = consistency.check(plan, session.bundle.db, session.weight_tables())
        doc["final_report"] = report.to_json()
    return doc


class Store:
    def __init__(self):
        self.bundles: dict = {}
        self.sessions: dict = {}
        self.lock = threading.Lock()

    def add_bundle(self, bundle: Bundle) -> None:
        with self.lock:
            self.bundles[bundle.id] = bundle

    def bundle(self, bundle_id: str) -> Bundle:
        try:
            return self.bundles[bundle_id]
        except KeyError:
            raise UnknownRelation(f"unknown graph {bundle_id!r}", graph=bundle_id) from None

    def session(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownSession(f"unknown session {session_id!r}", session=session_id) from None


def _build_query(bundle: Bundle, doc: dict) -> ExploratoryQuery:
    base = bundle.layer.base_query(doc["metric"])
    return ExploratoryQuery(
        base=base,
        group_by=tuple(doc.get("group_by", [])),
        selection=predicate_from_json(doc.get("selection", [])),
        extra_relations=tuple(doc.get("joins", [])),
    )


def _preview_payload(session: Session, target: str, spec: dict, sample_n: int) -> dict:
    plan = session.plan
    bundle = session.bundle
    strategy = strategy_from_spec(spec)
    t = next((t for t in session.targets if t.relation == target), None)
    if t is None:
        raise UnknownRelation(f"{target!r} is not a weighing target", relation=target)
    rel = bundle.db[target]
    wt = weighing.build(strategy, rel, t.join_key)
    validation = weighing.validate(wt, rel)
    tables = session.weight_tables(override={target: spec})
    tables[target] = wt
    q_result = engine.evaluate(plan, bundle.db, tables)
    q_base = engine.evaluate(consistency.base_only_plan(plan), bundle.db, {})
    report = consistency.check(plan, bundle.db, tables)
    view = engine.partial_view(plan, bundle.db, target, tables, sample_n=sample_n)
    return {
        "target": target,
        "strategy": spec,
        "partial_view": view.to_json(),
        "q_result": q_result.to_json(),
        "q_base_result": q_base.to_json(),
        "consistency": report.to_json(),
        "validation": validation.to_json(),
    }


def snapshot_session(session: Session) -> dict:
    """Everything needed to rebuild the session against the same bundle."""
    q = session.query
    return {
        "id": session.id,
        "graph_id": session.bundle.id,
        "query": {
            "metric": q.base.metric.name,
            "group_by": list(q.group_by),
            "selection": [
                {"attr": a.attr, "op": a.op, "value": a.literal}
                for a in (q.selection.atoms if q.selection else ())
            ],
            "joins": list(q.extra_relations),
        },
        "decided": dict(session.decided),
    }


def restore_session(store: Store, doc: dict) -> Session:
    bundle = store.bundle(doc["graph_id"])
    query = _build_query(bundle, doc["query"])
    plan = resolve(query, bundle.graph, bundle.db)
    session = Session(id=doc["id"], bundle=bundle, query=query, plan=plan)
    session.decided.update(doc.get("decided", {}))
    store.sessions[session.id] = session
    return session


def create_app(store: Optional[Store] = None, ui_dir: Optional[str] = None) -> FastAPI:
    store = store or Store()
    app = FastAPI(title="fanout-guard")
    app.state.store = store

    @app.exception_handler(FanoutGuardError)
    async def _domain_error(_request: Request, exc: FanoutGuardError):
        status = 404 if isinstance(exc, (UnknownSession,)) else 400
        return JSONResponse(status_code=status, content=exc.to_json())

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/graphs")
    async def upload_graph(request: Request):
        doc = await request.json()
        bundle = bundle_from_payload(doc)
        store.add_bundle(bundle)
        return {"id": bundle.id, "relations": sorted(bundle.db.relations)}

    @app.get("/graphs/{graph_id}")
    def get_graph(graph_id: str):
        bundle = store.bundle(graph_id)
        return {
            "id": bundle.id,
            "relations": [
                {
                    "name": rel.name,
                    "attributes": [[n, t.value] for n, t in rel.schema.attributes],
                    "rows": len(rel),
                }
                for rel in bundle.db.relations.values()
            ],
            "edges": [edge_to_json(e) for e in bundle.graph.edges],
            "fact_tables": list(bundle.graph.fact_tables),
            "metrics": sorted(bundle.layer.metrics),
        }

    @app.get("/metrics")
    def list_metrics():
        out = []
        for bundle in store.bundles.values():
            for name, metric in sorted(bundle.layer.metrics.items()):
                base = bundle.layer.base_queries.get(name)
                out.append(
                    {
                        "graph_id": bundle.id,
                        "name": name,
                        "agg": metric.agg.value,
                        "payload": metric.payload,
                        "base_relations": list(base.relations) if base else [],
                    }
                )
        return {"metrics": out}

    @app.post("/sessions")
    async def create_session(request: Request):
        doc = await request.json()
        token = doc.get("request_token")
        if token:
            with store.lock:
                for s in store.sessions.values():
                    if token in s.token_replies:
                        return s.token_replies[token]
        bundle = store.bundle(doc["graph_id"])
        query = _build_query(bundle, doc)
        plan = resolve(query, bundle.graph, bundle.db)
        session = Session(id=uuid.uuid4().hex[:12], bundle=bundle, query=query, plan=plan)
        store.sessions[session.id] = session
        reply = session_summary(session)
        if token:
            session.token_replies[token] = reply
        return reply

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return session_summary(store.session(session_id))

    @app.post("/sessions/{session_id}/preview")
    async def preview(session_id: str, request: Request):
        doc = await request.json()
        session = store.session(session_id)
        sample_n = int(doc.get("sample_n", DEFAULT_SAMPLE_N))
        return _preview_payload(session, doc["target"], doc["strategy"], sample_n)

    @app.post("/sessions/{session_id}/commit")
    async def commit(session_id: str, request: Request):
        doc = await request.json()
        session = store.session(session_id)
        with session.lock:
            token = doc.get("request_token")
            if token and token in session.token_replies:
                return session.token_replies[token]
            target = doc["target"]
            spec = doc["strategy"]
            if not any(t.relation == target for t in session.targets):
                raise UnknownRelation(
                    f"{target!r} is not a weighing target", relation=target
                )
            strategy = strategy_from_spec(spec)
            rel = session.bundle.db[target]
            t = next(t for t in session.targets if t.relation == target)
            wt = weighing.build(strategy, rel, t.join_key)
            validation = weighing.validate(wt, rel)
            if not validation.ok and not doc.get("override", False):
                raise ValidationFailed(
                    f"weight table for {target} fails the sum-to-1 check",
                    **validation.to_json(),
                )
            session.decided[target] = spec
            reply = session_summary(session)
            if not validation.ok:
                reply["override_applied"] = True
            if token:
                session.token_replies[token] = reply
            return reply

    @app.get("/sessions/{session_id}/view")
    def expand_view(session_id: str, target: str, offset: int = 0, limit: int = DEFAULT_SAMPLE_N):
        session = store.session(session_id)
        tables = session.weight_tables()
        view = engine.partial_view(
            session.plan, session.bundle.db, target, tables, sample_n=limit, offset=offset
        )
        return view.to_json()

    @app.get("/sessions/{session_id}/snapshot")
    def get_snapshot(session_id: str):
        return snapshot_session(store.session(session_id))

    @app.post("/sessions/restore")
    async def restore(request: Request):
        doc = await request.json()
        session = restore_session(store, doc)
        return session_summary(session)

    if ui_dir:
        ui_path = Path(ui_dir)

        @app.get("/")
        def index():
            return FileResponse(ui_path / "index.html")

        @app.get("/app.js")
        def app_js():
            return FileResponse(ui_path / "app.js", media_type="text/javascript")

        @app.get("/style.css")
        def style_css():
            return FileResponse(ui_path / "style.css", media_type="text/css")

    return app


def save_snapshot(session: Session, directory) -> Path:
    path = Path(directory) / f"session-{session.id}.json"
    path.write_text(json.dumps(snapshot_session(session), indent=2), encoding="utf-8")
    return path


def default_store(data_dirs: Optional[list] = None) -> Store:
    """Store preloaded with the bundled fixtures plus any extra data dirs."""
    from .fixtures import bias_dir, retail_dir

    store = Store()
    store.add_bundle(load_bundle(retail_dir(), "retail"))
    store.add_bundle(load_bundle(bias_dir(), "bias"))
    for d in data_dirs or []:
        store.add_bundle(load_bundle(d))
    return store
