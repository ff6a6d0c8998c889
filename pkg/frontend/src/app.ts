/**
 * Canvas wiring for the correspondence picker: two zoomable panes, a
 * residual-sorted point list, a fit panel, and a projected-annotation
 * overlay.  All state lives in PairSession; this file only draws it and
 * translates DOM events into session calls.
 */

import { HttpApiClient, PairSummary } from "./api.js";
import { Pane, PairSession } from "./session.js";
import { Viewport } from "./viewport.js";

const api = new HttpApiClient("");

interface PaneView {
  pane: Pane;
  canvas: HTMLCanvasElement;
  viewport: Viewport;
  image: HTMLImageElement | null;
}

const POINT_COLORS = ["#ff5252", "#40c4ff", "#ffd740", "#69f0ae", "#e040fb",
                      "#ffab40", "#64ffda", "#ff6e40"];

let session: PairSession | null = null;
const views: Record<Pane, PaneView> = {
  source: makeView("source"),
  target: makeView("target"),
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function makeView(pane: Pane): PaneView {
  return { pane, canvas: el<HTMLCanvasElement>(`${pane}-canvas`), viewport: new Viewport(), image: null };
}

async function boot(): Promise<void> {
  const pairs = await api.listPairs();
  const select = el<HTMLSelectElement>("pair-select");
  select.innerHTML = "";
  for (const pair of pairs) {
    const option = document.createElement("option");
    option.value = pair.pair_id;
    option.textContent = `${pair.pair_id} (${pair.source_image} -> ${pair.target_image})`;
    select.appendChild(option);
  }
  select.onchange = () => void openPair(select.value);
  if (pairs.length) await openPair(pairs[0].pair_id);
}

async function openPair(pairId: string): Promise<void> {
  session = new PairSession(api, pairId);
  session.onChange(render);
  await session.load();
  const pair = session.pair as PairSummary;
  await Promise.all([
    loadImage("source", api.imageUrl(pairId, "source")),
    loadImage("target", api.imageUrl(pairId, "target")),
  ]);
  for (const view of Object.values(views)) {
    if (view.image) {
      session.setPaneBounds(view.pane, view.image.naturalWidth, view.image.naturalHeight);
      view.viewport.fitTo(view.image.naturalWidth, view.image.naturalHeight,
                          view.canvas.width, view.canvas.height);
    }
  }
  el<HTMLElement>("pair-title").textContent =
    `${pair.pair_id}: ${pair.source_image} -> ${pair.target_image}`;
  render();
}

function loadImage(pane: Pane, url: string): Promise<void> {
  return new Promise((resolve) => {
    const image = new Image();
    image.onload = () => {
      views[pane].image = image;
      resolve();
    };
    image.onerror = () => {
      views[pane].image = null;
      resolve();
    };
    image.src = url;
  });
}

function render(): void {
  if (!session) return;
  drawPane(views.source);
  drawPane(views.target);
  renderFitPanel();
  renderPointList();
  el<HTMLElement>("conflict-banner").style.display = session.conflict ? "block" : "none";
  const previewButton = el<HTMLButtonElement>("preview-toggle");
  previewButton.disabled = !session.fit.fitted;
  previewButton.textContent = session.previewVisible ? "Hide projected boxes" : "Show projected boxes";
}

function drawPane(view: PaneView): void {
  const ctx = view.canvas.getContext("2d");
  if (!ctx || !session) return;
  ctx.fillStyle = "#181818";
  ctx.fillRect(0, 0, view.canvas.width, view.canvas.height);
  if (view.image) {
    const origin = view.viewport.toScreen({ x: 0, y: 0 });
    ctx.imageSmoothingEnabled = view.viewport.scale < 3;
    ctx.drawImage(
      view.image,
      origin.x,
      origin.y,
      view.viewport.lengthToScreen(view.image.naturalWidth),
      view.viewport.lengthToScreen(view.image.naturalHeight),
    );
  }

  session.points.forEach((point, index) => {
    const image = view.pane === "source"
      ? { x: point.sx, y: point.sy }
      : { x: point.tx, y: point.ty };
    drawMarker(ctx, view.viewport.toScreen(image), POINT_COLORS[index % POINT_COLORS.length],
               String(index));
  });

  if (session.pending && session.pending.pane === view.pane) {
    drawMarker(ctx, view.viewport.toScreen(session.pending), "#ffffff", "?");
  }

  if (view.pane === "target" && session.previewVisible && session.previewBoxes) {
    ctx.strokeStyle = "#76ff03";
    ctx.lineWidth = 1.5;
    ctx.font = "11px sans-serif";
    ctx.fillStyle = "#76ff03";
    for (const box of session.previewBoxes) {
      const tl = view.viewport.toScreen({ x: box.x, y: box.y });
      ctx.strokeRect(tl.x, tl.y,
                     view.viewport.lengthToScreen(box.w),
                     view.viewport.lengthToScreen(box.h));
      ctx.fillText(box.label, tl.x + 2, tl.y - 3);
    }
  }
}

function drawMarker(ctx: CanvasRenderingContext2D, at: { x: number; y: number },
                    color: string, label: string): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.moveTo(at.x - 7, at.y);
  ctx.lineTo(at.x + 7, at.y);
  ctx.moveTo(at.x, at.y - 7);
  ctx.lineTo(at.x, at.y + 7);
  ctx.stroke();
  ctx.fillStyle = color;
  ctx.font = "11px sans-serif";
  ctx.fillText(label, at.x + 4, at.y - 4);
}

function renderFitPanel(): void {
  if (!session) return;
  const fit = session.fit;
  el<HTMLElement>("fit-status").textContent = fit.fitted
    ? "fitted"
    : `unfitted (${fit.reason ?? "no points"})`;
  el<HTMLElement>("fit-rmse").textContent = fit.rmse === null ? "-" : fit.rmse.toFixed(3);
  el<HTMLElement>("fit-max").textContent =
    fit.maxError === null ? "-" : fit.maxError.toFixed(3);
  el<HTMLElement>("fit-revision").textContent = String(session.revision);
  el<HTMLElement>("fit-matrix").textContent = fit.matrix
    ? fit.matrix.map((row) => row.map((v) => v.toFixed(6)).join("  ")).join("\n")
    : "";
}

function renderPointList(): void {
  if (!session) return;
  const list = el<HTMLElement>("point-list");
  list.innerHTML = "";
  for (const row of session.residualRows()) {
    const item = document.createElement("li");
    const swatch = POINT_COLORS[row.index % POINT_COLORS.length];
    item.innerHTML =
      `<span class="swatch" style="background:${swatch}"></span>` +
      `#${row.index} residual ${row.residual.toFixed(3)} px `;
    item.onclick = () => centerOnPoint(row.index);
    const remove = document.createElement("button");
    remove.textContent = "delete";
    remove.onclick = (event) => {
      event.stopPropagation();
      void session?.deletePoint(row.index);
    };
    item.appendChild(remove);
    list.appendChild(item);
  }
  if (!session.fit.perPoint) {
    session.points.forEach((_, index) => {
      const item = document.createElement("li");
      item.textContent = `#${index} (no fit) `;
      const remove = document.createElement("button");
      remove.textContent = "delete";
      remove.onclick = () => void session?.deletePoint(index);
      item.appendChild(remove);
      list.appendChild(item);
    });
  }
}

/** Residual rows navigate: center both panes on the clicked point. */
function centerOnPoint(index: number): void {
  if (!session) return;
  const point = session.points[index];
  if (!point) return;
  const sourceCenter = { x: views.source.canvas.width / 2, y: views.source.canvas.height / 2 };
  const targetCenter = { x: views.target.canvas.width / 2, y: views.target.canvas.height / 2 };
  views.source.viewport.centerOn({ x: point.sx, y: point.sy }, sourceCenter);
  views.target.viewport.centerOn({ x: point.tx, y: point.ty }, targetCenter);
  render();
}

function wirePane(view: PaneView): void {
  view.canvas.addEventListener("click", (event) => {
    if (!session) return;
    const rect = view.canvas.getBoundingClientRect();
    const screen = { x: event.clientX - rect.left, y: event.clientY - rect.top };
    const image = view.viewport.toImage(screen);
    void session.pickPoint(view.pane, image.x, image.y);
  });
  view.canvas.addEventListener("wheel", (event) => {
    event.preventDefault();
    const rect = view.canvas.getBoundingClientRect();
    const at = { x: event.clientX - rect.left, y: event.clientY - rect.top };
    view.viewport.zoomAt(at, event.deltaY < 0 ? 1.2 : 1 / 1.2);
    render();
  });
  let dragging = false;
  let last = { x: 0, y: 0 };
  view.canvas.addEventListener("mousedown", (event) => {
    if (event.button === 1 || event.shiftKey) {
      dragging = true;
      last = { x: event.clientX, y: event.clientY };
      event.preventDefault();
    }
  });
  window.addEventListener("mousemove", (event) => {
    if (dragging) {
      view.viewport.panBy(event.clientX - last.x, event.clientY - last.y);
      last = { x: event.clientX, y: event.clientY };
      render();
    }
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
}

window.addEventListener("keydown", (event) => {
  if (event.key === "Escape") session?.cancelPending();
});

el<HTMLButtonElement>("preview-toggle").onclick = () => void session?.togglePreview();
el<HTMLButtonElement>("reload-button").onclick = () => window.location.reload();

wirePane(views.source);
wirePane(views.target);
void boot();
