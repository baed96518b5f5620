"""Knowledge-graph extraction from untrusted model output.

``parse_triples`` hardens the (subject, relationship, object) JSON contract
against the formatting noise models actually produce: code fences, prose
around the array, trailing commas, smart quotes. Repair is bounded to those
documented passes; anything worse is NoTriplesFound, never a guess. Elements
that are not valid triples are dropped and counted, not repaired.
"""

from __future__ import annotations

import html
import json
import logging
import re
import string
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

_TRAILING_COMMA_RE = re.compile(r",\s*([\]}])")

_QUOTE_MAP = str.maketrans(
    {
        "“": '"',  # left double
        "”": '"',  # right double
        "„": '"',  # low double
        "‘": "'",  # left single
        "’": "'",  # right single
        "‚": "'",  # low single
    }
)

REQUIRED_KEYS = ("subject", "relationship", "object")


class KGraphError(Exception):
    pass


class EmptyInput(KGraphError):
    pass


class NoTriplesFound(KGraphError):
    def __init__(self, message: str, skipped: int = 0):
        self.skipped = skipped
        super().__init__(message)


class IoFailure(KGraphError):
    pass


@dataclass(frozen=True)
class Triple:
    subject: str
    relationship: str
    object: str


@dataclass
class TripleParse:
    triples: list[Triple]
    skipped: int


@dataclass
class KnowledgeGraph:
    """Directed labeled graph; nodes unique, edges in first-appearance order."""

    nodes: list[str] = field(default_factory=list)
    edges: list[tuple[str, str, str]] = field(default_factory=list)  # (source, label, target)


def parse_triples(raw: str) -> TripleParse:
    """Parse model output into triples, applying the bounded repair pipeline.

    Passes, in order: slice from the first '[' to the last ']' (drops fences
    and surrounding prose); strict JSON parse; on failure one lenient retry
    with smart quotes normalized and trailing commas removed. Array elements
    missing any of the three keys, or with empty/non-string values, are
    skipped and counted.
    """
    if raw is None or not raw.strip():
        raise EmptyInput("no model output to parse")

    start = raw.find("[")
    end = raw.rfind("]")
    if start == -1 or end == -1 or end < start:
        raise NoTriplesFound("no JSON array found in output")
    candidate = raw[start : end + 1]

    data = None
    try:
        data = json.loads(candidate)
    except (ValueError, RecursionError):
        repaired = _TRAILING_COMMA_RE.sub(r"\1", candidate.translate(_QUOTE_MAP))
        try:
            data = json.loads(repaired)
        except (ValueError, RecursionError):
            raise NoTriplesFound("output is not parseable JSON after repair") from None

    if not isinstance(data, list):
        raise NoTriplesFound("JSON output is not an array")

    triples: list[Triple] = []
    skipped = 0
    for element in data:
        triple = _element_to_triple(element)
        if triple is None:
            skipped += 1
        else:
            triples.append(triple)
    if skipped:
        logger.warning("dropped %d malformed triple element(s)", skipped)
    if not triples:
        raise NoTriplesFound("no valid triples in output", skipped=skipped)
    return TripleParse(triples=triples, skipped=skipped)


def _element_to_triple(element) -> Triple | None:
    if not isinstance(element, dict):
        return None
    values = []
    for key in REQUIRED_KEYS:
        value = element.get(key)
        if not isinstance(value, str):
            return None
        value = value.strip()
        if not value:
            return None
        values.append(value)
    return Triple(*values)


def build_graph(triples: list[Triple]) -> KnowledgeGraph:
    """Deduplicated graph: one node per distinct trimmed label, one edge per
    distinct triple, both in first-appearance order."""
    nodes: dict[str, None] = {}
    edges: list[tuple[str, str, str]] = []
    seen_edges: set[tuple[str, str, str]] = set()
    for triple in triples:
        subject = triple.subject.strip()
        obj = triple.object.strip()
        relationship = triple.relationship.strip()
        nodes.setdefault(subject, None)
        nodes.setdefault(obj, None)
        edge = (subject, relationship, obj)
        if edge not in seen_edges:
            seen_edges.add(edge)
            edges.append(edge)
    return KnowledgeGraph(nodes=list(nodes), edges=edges)


def graph_to_json(graph: KnowledgeGraph) -> dict:
    return {
        "nodes": [{"id": label} for label in graph.nodes],
        "edges": [
            {"source": source, "target": target, "label": label}
            for source, label, target in graph.edges
        ],
    }


def graph_from_json(doc: dict) -> KnowledgeGraph:
    return KnowledgeGraph(
        nodes=[n["id"] for n in doc["nodes"]],
        edges=[(e["source"], e["label"], e["target"]) for e in doc["edges"]],
    )


def render_graph_html(graph: KnowledgeGraph, title: str = "Knowledge graph") -> str:
    """Self-contained interactive HTML: force layout, draggable nodes,
    pan/zoom, labeled edges. No external assets."""
    payload = json.dumps(graph_to_json(graph), ensure_ascii=True).replace("</", "<\\/")
    return _HTML_TEMPLATE.substitute(title=html.escape(title), graph_json=payload)


def write_graph_html(graph: KnowledgeGraph, path: str | Path, title: str = "Knowledge graph") -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_graph_html(graph, title=title), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return path


_HTML_TEMPLATE = string.Template(
    """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>$title</title>
<style>
  body { margin: 0; font-family: system-ui, sans-serif; background: #fafafa; }
  #wrap { position: relative; width: 100vw; height: 100vh; overflow: hidden; }
  svg { width: 100%; height: 100%; cursor: grab; }
  .edge { stroke: #9aa5b1; stroke-width: 1.4; }
  .edge-label { font-size: 10px; fill: #52606d; paint-order: stroke; stroke: #fafafa; stroke-width: 3px; }
  .node circle { fill: #3e7cb1; stroke: #27496d; stroke-width: 1.5; cursor: pointer; }
  .node text { font-size: 11px; fill: #1f2933; paint-order: stroke; stroke: #fafafa; stroke-width: 3px; }
  #notice { position: absolute; top: 45%; width: 100%; text-align: center; color: #7b8794; }
</style>
</head>
<body>
<div id="wrap">
  <svg id="canvas"><g id="view"></g></svg>
  <div id="notice" hidden>no relationships extracted</div>
</div>
<script id="graph-data" type="application/json">$graph_json</script>
<script>
(function () {
  var data = JSON.parse(document.getElementById("graph-data").textContent);
  var svg = document.getElementById("canvas");
  var view = document.getElementById("view");
  var NS = "http://www.w3.org/2000/svg";
  if (!data.nodes.length) {
    document.getElementById("notice").hidden = false;
    return;
  }
  var W = window.innerWidth || 1000, H = window.innerHeight || 700;
  var index = {};
  var nodes = data.nodes.map(function (n, i) {
    var angle = (2 * Math.PI * i) / data.nodes.length;
    index[n.id] = i;
    return { id: n.id, x: W / 2 + Math.cos(angle) * H / 3, y: H / 2 + Math.sin(angle) * H / 3, vx: 0, vy: 0 };
  });
  var edges = data.edges.map(function (e) {
    return { s: index[e.source], t: index[e.target], label: e.label };
  });

  function tick() {
    var i, j, a, b, dx, dy, d2, f;
    for (i = 0; i < nodes.length; i++) {
      for (j = i + 1; j < nodes.length; j++) {
        a = nodes[i]; b = nodes[j];
        dx = b.x - a.x; dy = b.y - a.y;
        d2 = dx * dx + dy * dy + 0.01;
        f = 18000 / d2;
        var dl = Math.sqrt(d2);
        a.vx -= (dx / dl) * f; a.vy -= (dy / dl) * f;
        b.vx += (dx / dl) * f; b.vy += (dy / dl) * f;
      }
    }
    edges.forEach(function (e) {
      a = nodes[e.s]; b = nodes[e.t];
      dx = b.x - a.x; dy = b.y - a.y;
      var dist = Math.sqrt(dx * dx + dy * dy) + 0.01;
      f = (dist - 160) * 0.02;
      a.vx += (dx / dist) * f; a.vy += (dy / dist) * f;
      b.vx -= (dx / dist) * f; b.vy -= (dy / dist) * f;
    });
    nodes.forEach(function (n) {
      if (n === dragging) return;
      n.vx += (W / 2 - n.x) * 0.002; n.vy += (H / 2 - n.y) * 0.002;
      n.vx *= 0.85; n.vy *= 0.85;
      n.x += n.vx; n.y += n.vy;
    });
  }

  var edgeEls = edges.map(function (e) {
    var line = document.createElementNS(NS, "line");
    line.setAttribute("class", "edge");
    view.appendChild(line);
    var label = document.createElementNS(NS, "text");
    label.setAttribute("class", "edge-label");
    label.textContent = e.label;
    var t = document.createElementNS(NS, "title");
    t.textContent = e.label;
    label.appendChild(t);
    view.appendChild(label);
    return { line: line, label: label };
  });
  var dragging = null;
  var nodeEls = nodes.map(function (n) {
    var g = document.createElementNS(NS, "g");
    g.setAttribute("class", "node");
    var c = document.createElementNS(NS, "circle");
    c.setAttribute("r", 9);
    var t = document.createElementNS(NS, "text");
    t.setAttribute("dx", 12);
    t.setAttribute("dy", 4);
    t.textContent = n.id;
    g.appendChild(c); g.appendChild(t);
    view.appendChild(g);
    c.addEventListener("mousedown", function (ev) { dragging = n; ev.preventDefault(); });
    return g;
  });
  svg.addEventListener("mousemove", function (ev) {
    if (dragging) {
      var pt = svg.createSVGPoint(); pt.x = ev.clientX; pt.y = ev.clientY;
      var loc = pt.matrixTransform(view.getScreenCTM().inverse());
      dragging.x = loc.x; dragging.y = loc.y; dragging.vx = 0; dragging.vy = 0;
    }
  });
  svg.addEventListener("mouseup", function () { dragging = null; });
  var scale = 1, panX = 0, panY = 0;
  svg.addEventListener("wheel", function (ev) {
    ev.preventDefault();
    scale *= ev.deltaY < 0 ? 1.1 : 0.9;
    view.setAttribute("transform", "translate(" + panX + "," + panY + ") scale(" + scale + ")");
  });

  function draw() {
    edges.forEach(function (e, i) {
      var a = nodes[e.s], b = nodes[e.t], el = edgeEls[i];
      el.line.setAttribute("x1", a.x); el.line.setAttribute("y1", a.y);
      el.line.setAttribute("x2", b.x); el.line.setAttribute("y2", b.y);
      el.label.setAttribute("x", (a.x + b.x) / 2);
      el.label.setAttribute("y", (a.y + b.y) / 2 - 4);
    });
    nodes.forEach(function (n, i) {
      nodeEls[i].setAttribute("transform", "translate(" + n.x + "," + n.y + ")");
    });
  }
  for (var warm = 0; warm < 120; warm++) tick();
  function loop() { tick(); draw(); requestAnimationFrame(loop); }
  requestAnimationFrame(loop);
})();
</script>
</body>
</html>
"""
)
