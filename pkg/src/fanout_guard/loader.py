"""Loading a data bundle: join-graph JSON, semantic-layer JSON, and the
relation CSVs, either from a directory on disk or from an uploaded JSON
payload with inline CSV text."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import join_graph as jg
from .relation import AnnotatedRelation, ColType, Database, Schema, load_csv, load_csv_text
from .semantic_model import SemanticLayer, layer_from_json


@dataclass
class Bundle:
    id: str
    db: Database
    graph: jg.JoinGraph
    layer: SemanticLayer


def _schema_from_entry(entry: dict) -> Schema:
    attrs = tuple((name, ColType(t)) for name, t in entry["attributes"])
    return Schema(relation_name=entry["name"], attributes=attrs)


def _finish(bundle_id: str, relations: dict, graph_doc: dict, layer_doc: dict) -> Bundle:
    db = Database(relations=relations)
    graph = jg.graph_from_json(graph_doc)
    jg.validate(graph, db)
    graph = jg.resolve_cardinalities(graph, db)
    layer = layer_from_json(layer_doc)
    return Bundle(id=bundle_id, db=db, graph=graph, layer=layer)


def load_bundle(data_dir, bundle_id=None) -> Bundle:
    """Directory layout: graph.json, semantic.json, one CSV per relation
    (file name from the relation entry, default <name>.csv)."""
    data_dir = Path(data_dir)
    with open(data_dir / "graph.json", encoding="utf-8") as f:
        graph_doc = json.load(f)
    with open(data_dir / "semantic.json", encoding="utf-8") as f:
        layer_doc = json.load(f)
    relations = {}
    for entry in graph_doc["relations"]:
        schema = _schema_from_entry(entry)
        path = data_dir / entry.get("file", f"{entry['name']}.csv")
        relations[entry["name"]] = load_csv(
            path, schema, null_token=entry.get("null_token", "")
        )
    return _finish(bundle_id or data_dir.name, relations, graph_doc, layer_doc)


def bundle_from_payload(doc: dict) -> Bundle:
    """Upload payload: {id, graph, semantic_layer, tables: {name: csv text}}."""
    graph_doc = doc["graph"]
    tables = doc.get("tables", {})
    relations = {}
    for entry in graph_doc["relations"]:
        schema = _schema_from_entry(entry)
        name = entry["name"]
        relations[name] = load_csv_text(
            tables[name], schema, null_token=entry.get("null_token", "")
        )
    return _finish(doc["id"], relations, graph_doc, doc["semantic_layer"])
