"""Batch front door: run metrics over a data bundle, check consistency,
apply weighing strategies non-interactively, and emit reports.

Exit codes: 0 consistent, 2 inconsistent, 1 bad input or any error.
"""

from __future__ import annotations

import json
import os
import sys

import click

from . import consistency, engine, weighing
from .errors import FanoutGuardError
from .fixtures import retail_dir
from .join_graph import infer_cardinality
from .loader import load_bundle
from .semantic_model import Atom, ExploratoryQuery, Predicate, resolve
from .semiring import sr_finalize

_OPS = (">=", "<=", "!=", "=", ">", "<")


def _data_dir(explicit):
    if explicit:
        return explicit
    env = os.environ.get("FANOUT_GUARD_DATA")
    if env:
        return env
    return retail_dir()


def _parse_literal(raw: str):
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw.strip("'\"")


def _parse_selection(specs) -> Predicate | None:
    atoms = []
    for spec in specs:
        for op in _OPS:
            if op in spec:
                attr, raw = spec.split(op, 1)
                atoms.append(Atom(attr=attr.strip(), op=op, literal=_parse_literal(raw.strip())))
                break
        else:
            raise click.UsageError(f"cannot parse selection {spec!r}; use attr>literal")
    return Predicate(atoms=tuple(atoms)) if atoms else None


def _parse_strategy(spec: str):
    """relation=equal | relation=order:attr:first|last |
    relation=position:attr:fw:lw | relation=prop:attr | relation=custom:file"""
    if "=" not in spec:
        raise click.UsageError(f"weigh spec {spec!r} must look like REL=strategy")
    rel, body = spec.split("=", 1)
    parts = body.split(":")
    kind = parts[0]
    if kind == "equal":
        return rel, weighing.Equal()
    if kind == "order":
        if len(parts) != 3 or parts[2] not in ("first", "last"):
            raise click.UsageError(f"order strategy needs order:attr:first|last, got {body!r}")
        return rel, weighing.OrderBased(attr=parts[1], pick=parts[2])
    if kind == "position":
        if len(parts) != 4:
            raise click.UsageError(f"position strategy needs position:attr:fw:lw, got {body!r}")
        return rel, weighing.PositionBased(attr=parts[1], first_w=parts[2], last_w=parts[3])
    if kind == "prop":
        if len(parts) != 2:
            raise click.UsageError(f"prop strategy needs prop:attr, got {body!r}")
        return rel, weighing.Proportional(attr=parts[1])
    if kind == "custom":
        if len(parts) != 2:
            raise click.UsageError(f"custom strategy needs custom:file, got {body!r}")
        return rel, weighing.Custom(entries=weighing.load_weight_entries(parts[1]))
    raise click.UsageError(f"unknown strategy {kind!r}")


def _fmt(v) -> str:
    if v is None:
        return "null"
    return f"{v:g}"


def _print_text(plan, result, report, unweighed_targets):
    metric = plan.metric
    click.echo(
        f"metric: {metric.name} = {metric.agg.value}({metric.payload})   "
        f"base: {', '.join(plan.query.base.relations)}"
    )
    if plan.steps:
        click.echo("plan: " + ", ".join(f"{s.parent}->{s.child}" for s in plan.steps))
    if plan.targets:
        marks = [
            f"{t.relation}[{','.join(t.join_key)}]"
            + (" (unweighed)" if t.relation in unweighed_targets else "")
            for t in plan.targets
        ]
        click.echo("weighing targets: " + ", ".join(marks))
    if plan.group_by:
        click.echo(f"group by {', '.join(plan.group_by)}:")
        for key, ann in result.sorted_items():
            label = ", ".join("null" if v is None else str(v) for v in key)
            click.echo(f"  {label} : {_fmt(sr_finalize(ann))}")
    else:
        click.echo(f"total : {_fmt(sr_finalize(result.total()))}")
    if report.not_selected_total is not None:
        click.echo(f"not-selected total: {_fmt(report.not_selected_total)}")
    click.echo(
        f"base total = {_fmt(report.base_total)}   "
        f"query total = {_fmt(report.query_total)}   "
        f"verdict: {report.verdict}"
    )
    for finding in report.per_relation_fanout:
        shown = ", ".join(
            f"{tuple(k)}: {_fmt(p)}" for k, p in finding.groups
        )
        more = finding.total_groups_off - len(finding.groups)
        suffix = f" (+{more} more)" if more > 0 else ""
        click.echo(
            f"fanout: {finding.relation}[{','.join(finding.join_key)}] "
            f"groups with partial != 1: {shown}{suffix}"
        )


@click.group()
def main():
    """Consistent aggregation over declared join graphs."""


@main.command()
@click.option("--metric", required=True, help="metric name from the semantic layer")
@click.option("--group-by", "group_by", multiple=True, help="qualified attribute, repeatable")
@click.option("--select", "selects", multiple=True, help="attr OP literal, repeatable (conjunction)")
@click.option("--join", "joins", multiple=True, help="extra relation to enrich-join, repeatable")
@click.option("--weigh", "weighs", multiple=True, help="REL=strategy (see docs), repeatable")
@click.option("--data-dir", default=None, help="bundle directory (default $FANOUT_GUARD_DATA or the retail fixture)")
@click.option("--output", type=click.Choice(["text", "json"]), default="text")
@click.option("--executor", type=click.Choice(["materialize", "pushdown"]), default="materialize")
@click.option("--sample-n", default=100, show_default=True)
@click.option("--tolerance", default=1e-9, show_default=True)
def run(metric, group_by, selects, joins, weighs, data_dir, output, executor, sample_n, tolerance):
    """Evaluate an exploratory query and check its consistency."""
    try:
        bundle = load_bundle(_data_dir(data_dir))
        base = bundle.layer.base_query(metric)
        query = ExploratoryQuery(
            base=base,
            group_by=tuple(group_by),
            selection=_parse_selection(selects),
            extra_relations=tuple(joins),
        )
        plan = resolve(query, bundle.graph, bundle.db)
        strategies = dict(_parse_strategy(w) for w in weighs)
        tables = {}
        unweighed = set()
        for t in plan.targets:
            rel = bundle.db[t.relation]
            if t.relation in strategies:
                wt = weighing.build(strategies[t.relation], rel, t.join_key)
                validation = weighing.validate(wt, rel)
                if not validation.ok:
                    raise FanoutGuardError(
                        f"weight table for {t.relation} fails validation",
                        **validation.to_json(),
                    )
            else:
                wt = weighing.identity_table(rel, t.join_key)
                unweighed.add(t.relation)
            tables[t.relation] = wt
        for name in strategies:
            if all(t.relation != name for t in plan.targets):
                raise click.UsageError(f"{name!r} is not a weighing target of this query")
        evaluator = engine.pushdown_aggregate if executor == "pushdown" else engine.evaluate
        result = evaluator(plan, bundle.db, tables)
        report = consistency.check(plan, bundle.db, tables, tolerance)
        if output == "json":
            click.echo(
                json.dumps(
                    {
                        "metric": metric,
                        "result": result.to_json(),
                        "report": report.to_json(),
                        "unweighed_targets": sorted(unweighed),
                    },
                    indent=2,
                )
            )
        else:
            _print_text(plan, result, report, unweighed)
        sys.exit(0 if report.consistent else 2)
    except click.UsageError as e:
        click.echo(f"error: {e.format_message()}", err=True)
        sys.exit(1)
    except FanoutGuardError as e:
        click.echo(json.dumps(e.to_json()), err=True)
        sys.exit(1)


@main.command("validate-graph")
@click.option("--data-dir", default=None)
def validate_graph(data_dir):
    """Load a bundle and report whether its join graph is a valid tree."""
    try:
        bundle = load_bundle(_data_dir(data_dir))
    except FanoutGuardError as e:
        click.echo(json.dumps(e.to_json()), err=True)
        sys.exit(1)
    click.echo(f"graph ok: {len(bundle.graph.nodes)} relations, {len(bundle.graph.edges)} edges")
    for e in bundle.graph.edges:
        on = ", ".join(f"{l}={r}" for l, r in e.on)
        click.echo(f"  {e.left} -- {e.right} on {on} [{e.cardinality.value}]")
    sys.exit(0)


@main.command("infer-cardinality")
@click.option("--data-dir", default=None)
def infer_cardinality_cmd(data_dir):
    """Report the observed cardinality of every declared edge."""
    try:
        bundle = load_bundle(_data_dir(data_dir))
        for e in bundle.graph.edges:
            observed = infer_cardinality(e, bundle.db)
            click.echo(f"{e.left} -- {e.right}: {observed.value}")
    except FanoutGuardError as err:
        click.echo(json.dumps(err.to_json()), err=True)
        sys.exit(1)
    sys.exit(0)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--data-dir", "data_dirs", multiple=True, help="extra bundle directory, repeatable")
@click.option("--ui-dir", default=None, help="directory with the built web UI to serve at /")
def serve(host, port, data_dirs, ui_dir):
    """Start the weighing session service (retail and bias fixtures preloaded)."""
    import uvicorn

    from .service import create_app, default_store

    app = create_app(default_store(list(data_dirs)), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group()
def snapshot():
    """Save or restore a live session over HTTP."""


@snapshot.command("save")
@click.option("--url", required=True)
@click.option("--session-id", required=True)
@click.option("--out", required=True, type=click.Path())
def snapshot_save(url, session_id, out):
    import httpx

    resp = httpx.get(f"{url}/sessions/{session_id}/snapshot")
    if resp.status_code != 200:
        click.echo(resp.text, err=True)
        sys.exit(1)
    with open(out, "w", encoding="utf-8") as f:
        json.dump(resp.json(), f, indent=2)
    click.echo(f"saved session {session_id} to {out}")
    sys.exit(0)


@snapshot.command("restore")
@click.option("--url", required=True)
@click.option("--file", "path", required=True, type=click.Path(exists=True))
def snapshot_restore(url, path):
    import httpx

    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    resp = httpx.post(f"{url}/sessions/restore", json=doc)
    if resp.status_code != 200:
        click.echo(resp.text, err=True)
        sys.exit(1)
    click.echo(json.dumps(resp.json(), indent=2))
    sys.exit(0)


if __name__ == "__main__":
    main()
