import type { GraphDoc } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 900;
const HEIGHT = 620;
const LAYOUT_ITERATIONS = 260;

interface LayoutNode {
  id: string;
  x: number;
  y: number;
  vx: number;
  vy: number;
}

export function isGraphDoc(doc: unknown): doc is GraphDoc {
  if (typeof doc !== "object" || doc === null) return false;
  const candidate = doc as { nodes?: unknown; edges?: unknown };
  if (!Array.isArray(candidate.nodes) || !Array.isArray(candidate.edges)) return false;
  const nodeOk = candidate.nodes.every(
    (n) => typeof n === "object" && n !== null && typeof (n as { id?: unknown }).id === "string",
  );
  const ids = new Set(candidate.nodes.map((n) => (n as { id: string }).id));
  const edgeOk = candidate.edges.every((e) => {
    if (typeof e !== "object" || e === null) return false;
    const edge = e as { source?: unknown; target?: unknown; label?: unknown };
    return (
      typeof edge.source === "string" &&
      typeof edge.target === "string" &&
      typeof edge.label === "string" &&
      ids.has(edge.source) &&
      ids.has(edge.target)
    );
  });
  return nodeOk && edgeOk;
}

function runLayout(doc: GraphDoc): LayoutNode[] {
  const nodes: LayoutNode[] = doc.nodes.map((n, i) => {
    const angle = (2 * Math.PI * i) / doc.nodes.length;
    return {
      id: n.id,
      x: WIDTH / 2 + (Math.cos(angle) * HEIGHT) / 3,
      y: HEIGHT / 2 + (Math.sin(angle) * HEIGHT) / 3,
      vx: 0,
      vy: 0,
    };
  });
  const index = new Map(nodes.map((n, i) => [n.id, i]));
  const springs = doc.edges.map((e) => [index.get(e.source)!, index.get(e.target)!] as const);

  for (let step = 0; step < LAYOUT_ITERATIONS; step++) {
    for (let i = 0; i < nodes.length; i++) {
      for (let j = i + 1; j < nodes.length; j++) {
        const a = nodes[i];
        const b = nodes[j];
        const dx = b.x - a.x;
        const dy = b.y - a.y;
        const d2 = dx * dx + dy * dy + 0.01;
        const dist = Math.sqrt(d2);
        const push = 16000 / d2;
        a.vx -= (dx / dist) * push;
        a.vy -= (dy / dist) * push;
        b.vx += (dx / dist) * push;
        b.vy += (dy / dist) * push;
      }
    }
    for (const [si, ti] of springs) {
      const a = nodes[si];
      const b = nodes[ti];
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const dist = Math.sqrt(dx * dx + dy * dy) + 0.01;
      const pull = (dist - 150) * 0.02;
      a.vx += (dx / dist) * pull;
      a.vy += (dy / dist) * pull;
      b.vx -= (dx / dist) * pull;
      b.vy -= (dy / dist) * pull;
    }
    for (const n of nodes) {
      n.vx += (WIDTH / 2 - n.x) * 0.003;
      n.vy += (HEIGHT / 2 - n.y) * 0.003;
      n.vx *= 0.82;
      n.vy *= 0.82;
      n.x += n.vx;
      n.y += n.vy;
    }
  }
  return nodes;
}

/** Mount an interactive force-directed view of a graph document.
 *
 * Renders an error banner on schema mismatch and a notice for empty graphs;
 * never throws on bad input. Nodes are draggable; the wheel zooms. */
export function renderGraph(container: HTMLElement, doc: unknown): void {
  container.textContent = "";

  if (!isGraphDoc(doc)) {
    const banner = document.createElement("div");
    banner.className = "error-banner";
    banner.textContent = "graph data did not match the expected schema";
    container.appendChild(banner);
    return;
  }

  if (doc.nodes.length === 0) {
    const notice = document.createElement("div");
    notice.className = "graph-notice";
    notice.textContent = "no relationships extracted";
    container.appendChild(notice);
    return;
  }

  const nodes = runLayout(doc);
  const index = new Map(nodes.map((n, i) => [n.id, i]));

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "graph-canvas");
  const view = document.createElementNS(SVG_NS, "g");
  svg.appendChild(view);
  container.appendChild(svg);

  const edgeEls = doc.edges.map((edge) => {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("class", "edge");
    view.appendChild(line);
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("class", "edge-label");
    label.textContent = edge.label;
    const tooltip = document.createElementNS(SVG_NS, "title");
    tooltip.textContent = `${edge.source} ${edge.label} ${edge.target}`;
    label.appendChild(tooltip);
    view.appendChild(label);
    return { line, label, edge };
  });

  let dragging: LayoutNode | null = null;
  const nodeEls = nodes.map((node) => {
    const group = document.createElementNS(SVG_NS, "g");
    group.setAttribute("class", "node");
    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("r", "9");
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("dx", "12");
    label.setAttribute("dy", "4");
    label.textContent = node.id;
    group.appendChild(circle);
    group.appendChild(label);
    group.addEventListener("mousedown", (event) => {
      dragging = node;
      event.preventDefault();
    });
    view.appendChild(group);
    return group;
  });

  function draw(): void {
    for (const { line, label, edge } of edgeEls) {
      const a = nodes[index.get(edge.source)!];
      const b = nodes[index.get(edge.target)!];
      line.setAttribute("x1", String(a.x));
      line.setAttribute("y1", String(a.y));
      line.setAttribute("x2", String(b.x));
      line.setAttribute("y2", String(b.y));
      label.setAttribute("x", String((a.x + b.x) / 2));
      label.setAttribute("y", String((a.y + b.y) / 2 - 4));
    }
    nodes.forEach((node, i) => {
      nodeEls[i].setAttribute("transform", `translate(${node.x},${node.y})`);
    });
  }

  let zoom = 1;
  svg.addEventListener("wheel", (event) => {
    event.preventDefault();
    zoom = Math.min(4, Math.max(0.25, zoom * (event.deltaY < 0 ? 1.12 : 0.9)));
    const w = WIDTH / zoom;
    const h = HEIGHT / zoom;
    svg.setAttribute("viewBox", `${(WIDTH - w) / 2} ${(HEIGHT - h) / 2} ${w} ${h}`);
    svg.classList.toggle("zoomed", zoom > 1.3);
  });

  svg.addEventListener("mousemove", (event) => {
    if (!dragging) return;
    const rect = svg.getBoundingClientRect();
    const scaleX = rect.width > 0 ? WIDTH / zoom / rect.width : 1;
    const scaleY = rect.height > 0 ? HEIGHT / zoom / rect.height : 1;
    dragging.x = (event.clientX - rect.left) * scaleX + (WIDTH - WIDTH / zoom) / 2;
    dragging.y = (event.clientY - rect.top) * scaleY + (HEIGHT - HEIGHT / zoom) / 2;
    draw();
  });
  svg.addEventListener("mouseup", () => {
    dragging = null;
  });
  svg.addEventListener("mouseleave", () => {
    dragging = null;
  });

  draw();
}
