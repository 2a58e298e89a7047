"""Versioned line-delimited file formats for environments, corpora, pairs, models, reports.

Every file starts with a header line carrying a schema tag. Records are
canonical JSON (sorted keys, no whitespace), so serialize -> parse ->
serialize round-trips byte-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

from .envmodel import Action, Edge, Environment, Node, Observation, PlacedObject, Route, RouteStep
from .grounding import FEATURE_NAMES, GroundingModel
from .instructions import AnnotatedInstruction, GoldLabel, PhraseSpan, sentence_bounds
from .perturb import CorpusRecord, DetectionExample, PairedExample

ENV_SCHEMA = "env@1"
CORPUS_SCHEMA = "corpus@1"
PAIRS_SCHEMA = "pairs@1"
MODEL_SCHEMA = "model@1"
REPORT_SCHEMA = "report@1"
EVENTS_SCHEMA = "events@1"


class SchemaError(ValueError):
    """File header or record does not match the expected schema."""


def dumps(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _check_header(line: str, schema: str) -> dict:
    header = json.loads(line)
    if header.get("schema") != schema:
        raise SchemaError(f"expected {schema}, found {header.get('schema')!r}")
    return header


def write_text(path: str | Path, lines: list[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_lines(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


# -- environments -----------------------------------------------------------


def env_to_lines(env: Environment) -> list[str]:
    lines = [
        dumps(
            {
                "schema": ENV_SCHEMA,
                "id": env.id,
                "room_vocab": sorted(env.room_vocab),
                "object_vocab": sorted(env.object_vocab),
            }
        )
    ]
    for node in env.nodes:
        lines.append(
            dumps(
                {
                    "node": {
                        "id": node.id,
                        "x": node.position[0],
                        "y": node.position[1],
                        "room": node.room_label,
                        "z": node.z_level,
                        "objects": [{"name": o.name, "bearing": o.bearing} for o in node.objects],
                    }
                }
            )
        )
    for edge in env.edges:
        lines.append(dumps({"edge": {"from": edge.from_node, "to": edge.to_node, "length_m": edge.length_m}}))
    return lines


def env_from_lines(lines: list[str]) -> Environment:
    header = _check_header(lines[0], ENV_SCHEMA)
    nodes = []
    edges = []
    for line in lines[1:]:
        record = json.loads(line)
        if "node" in record:
            n = record["node"]
            nodes.append(
                Node(
                    id=n["id"],
                    position=(n["x"], n["y"]),
                    room_label=n["room"],
                    objects=tuple(PlacedObject(o["name"], o["bearing"]) for o in n["objects"]),
                    z_level=n["z"],
                )
            )
        elif "edge" in record:
            e = record["edge"]
            edges.append(Edge(e["from"], e["to"], e["length_m"]))
        else:
            raise SchemaError(f"unknown record {record}")
    return Environment(
        id=header["id"],
        nodes=tuple(nodes),
        edges=tuple(edges),
        room_vocab=frozenset(header["room_vocab"]),
        object_vocab=frozenset(header["object_vocab"]),
    )


# -- routes and instructions -------------------------------------------------


def route_to_dict(route: Route) -> dict:
    return {
        "env_id": route.env_id,
        "start_node": route.start_node,
        "start_heading": route.start_heading,
        "steps": [
            {
                "node": s.node_id,
                "heading": s.heading,
                "observation": {
                    "room": s.observation.room_label,
                    "visible": [[n, d] for n, d in s.observation.visible],
                },
                "action": {"label": s.action.direction_label, "target": s.action.target},
            }
            for s in route.steps
        ],
    }


def route_from_dict(d: dict) -> Route:
    steps = tuple(
        RouteStep(
            node_id=s["node"],
            heading=s["heading"],
            observation=Observation(
                room_label=s["observation"]["room"],
                visible=tuple((n, dd) for n, dd in s["observation"]["visible"]),
            ),
            action=Action(s["action"]["label"], s["action"]["target"]),
        )
        for s in d["steps"]
    )
    return Route(env_id=d["env_id"], start_node=d["start_node"], start_heading=d["start_heading"], steps=steps)


def instruction_to_dict(ann: AnnotatedInstruction) -> dict:
    return {
        "tokens": list(ann.tokens),
        "spans": [[s.i, s.j, s.kind] for s in ann.phrase_spans],
        "alignment": {str(c): p for c, p in sorted(ann.alignment.items())},
        "gold": [
            {"hallucination": g.is_hallucination, "type": g.h_type, "correction": g.gold_correction}
            for g in ann.gold
        ],
    }


def instruction_from_dict(d: dict) -> AnnotatedInstruction:
    tokens = tuple(d["tokens"])
    return AnnotatedInstruction(
        tokens=tokens,
        phrase_spans=tuple(PhraseSpan(i, j, kind) for i, j, kind in d["spans"]),
        alignment={int(c): p for c, p in d["alignment"].items()},
        gold=tuple(
            GoldLabel(g["hallucination"], g["type"], g["correction"]) for g in d["gold"]
        ),
        sentence_bounds=sentence_bounds(tokens),
    )


# -- corpora ------------------------------------------------------------------


def corpus_to_lines(records: list[CorpusRecord]) -> list[str]:
    lines = [dumps({"schema": CORPUS_SCHEMA, "count": len(records)})]
    for r in records:
        lines.append(
            dumps(
                {
                    "record": {
                        "route_id": r.route_id,
                        "env_id": r.env_id,
                        "route": route_to_dict(r.route),
                        "instruction": instruction_to_dict(r.instruction),
                    }
                }
            )
        )
    return lines


def corpus_from_lines(lines: list[str]) -> list[CorpusRecord]:
    _check_header(lines[0], CORPUS_SCHEMA)
    records = []
    for line in lines[1:]:
        r = json.loads(line)["record"]
        records.append(
            CorpusRecord(
                route_id=r["route_id"],
                env_id=r["env_id"],
                route=route_from_dict(r["route"]),
                instruction=instruction_from_dict(r["instruction"]),
            )
        )
    return records


# -- training pairs -----------------------------------------------------------


def _example_to_dict(example: DetectionExample, route_index: int) -> dict:
    return {
        "route": route_index,
        "tokens": list(example.tokens),
        "i": example.i,
        "j": example.j,
        "label": example.label,
        "kind": example.kind,
        "alignment": {str(c): p for c, p in sorted(example.alignment.items())},
    }


def _example_from_dict(d: dict, routes: list[tuple[str, Route]]) -> DetectionExample:
    env_id, route = routes[d["route"]]
    return DetectionExample(
        env_id=env_id,
        route=route,
        tokens=tuple(d["tokens"]),
        i=d["i"],
        j=d["j"],
        label=d["label"],
        kind=d["kind"],
        alignment={int(c): p for c, p in d["alignment"].items()},
    )


def pairs_to_lines(pairs: list[PairedExample], task: str) -> list[str]:
    routes: list[tuple[str, Route]] = []
    index: dict[tuple[str, Route], int] = {}
    for pair in pairs:
        key = (pair.positive.env_id, pair.positive.route)
        if key not in index:
            index[key] = len(routes)
            routes.append(key)
    lines = [dumps({"schema": PAIRS_SCHEMA, "task": task, "pairs": len(pairs)})]
    for env_id, route in routes:
        lines.append(dumps({"route": {"env_id": env_id, "route": route_to_dict(route)}}))
    for pair in pairs:
        idx = index[(pair.positive.env_id, pair.positive.route)]
        lines.append(
            dumps(
                {
                    "pair": {
                        "positive": _example_to_dict(pair.positive, idx),
                        "negative": _example_to_dict(pair.negative, idx),
                    }
                }
            )
        )
    return lines


def pairs_from_lines(lines: list[str]) -> tuple[list[PairedExample], str]:
    header = _check_header(lines[0], PAIRS_SCHEMA)
    routes: list[tuple[str, Route]] = []
    pairs: list[PairedExample] = []
    for line in lines[1:]:
        record = json.loads(line)
        if "route" in record:
            routes.append((record["route"]["env_id"], route_from_dict(record["route"]["route"])))
        elif "pair" in record:
            pairs.append(
                PairedExample(
                    positive=_example_from_dict(record["pair"]["positive"], routes),
                    negative=_example_from_dict(record["pair"]["negative"], routes),
                )
            )
        else:
            raise SchemaError(f"unknown record {record}")
    return pairs, header["task"]


# -- models ---------------------------------------------------------------------


def model_to_lines(model: GroundingModel) -> list[str]:
    lines = [dumps({"schema": MODEL_SCHEMA})]
    for name, weight in zip(FEATURE_NAMES, model.weights):
        lines.append(dumps({"feature": name, "weight": weight}))
    lines.append(dumps({"threshold": model.threshold}))
    lines.append(dumps({"meta": model.meta or {}}))
    return lines


def model_from_lines(lines: list[str]) -> GroundingModel:
    _check_header(lines[0], MODEL_SCHEMA)
    weights = []
    threshold = None
    meta: dict = {}
    names = []
    for line in lines[1:]:
        record = json.loads(line)
        if "feature" in record:
            names.append(record["feature"])
            weights.append(record["weight"])
        elif "threshold" in record:
            threshold = record["threshold"]
        elif "meta" in record:
            meta = record["meta"]
    if tuple(names) != FEATURE_NAMES:
        raise SchemaError("feature names do not match this build")
    return GroundingModel(weights=tuple(weights), threshold=threshold, meta=meta)


# -- reports ----------------------------------------------------------------------


def report_to_lines(report_dict: dict) -> list[str]:
    lines = [dumps({"schema": REPORT_SCHEMA})]
    for section in ("detection", "suggestion", "navigation"):
        for entry in report_dict.get(section, []):
            lines.append(dumps({section: entry}))
    return lines
