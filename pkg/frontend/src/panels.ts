/** Three-panel reconstruction figure: truth, estimate, absolute error. */

import { writeFileSync } from "node:fs";

import { absoluteDifference, parseGridCsv, type GridExport } from "./csv.js";
import { colormap } from "./color.js";
import { encodePng } from "./png.js";
import { BLACK, GREY, Raster, textWidth } from "./raster.js";

const CELL = 3; // screen pixels per grid cell at resolution 128
const PANEL_GAP = 18;
const TOP = 26;
const BOTTOM = 34;
const BAR_W = 12;
const BAR_GAP = 6;

function formatValue(v: number): string {
  if (v === 0) return "0";
  const magnitude = Math.abs(v);
  if (magnitude >= 0.01 && magnitude < 1000) return v.toPrecision(3);
  return v.toExponential(1).replace("e-", "e-").replace("e+", "e+");
}

interface Panel {
  title: string;
  values: number[][];
  lo: number;
  hi: number;
}

function drawPanel(canvas: Raster, x0: number, panel: Panel, side: number): void {
  const nx = panel.values.length;
  const ny = panel.values[0].length;
  const span = panel.hi - panel.lo || 1.0;
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      const t = (panel.values[i][j] - panel.lo) / span;
      const color = colormap(t);
      const px = x0 + Math.floor((i * side) / nx);
      const py = TOP + side - Math.floor(((j + 1) * side) / ny);
      const w = Math.ceil(side / nx);
      const h = Math.ceil(side / ny);
      canvas.fillRect(px, py, w, h, color);
    }
  }
  canvas.rect(x0 - 1, TOP - 1, side + 2, side + 2, BLACK);
  const tx = x0 + Math.max(0, Math.floor((side - textWidth(panel.title)) / 2));
  canvas.text(tx, 8, panel.title);

  // colorbar with min/max labels
  const bx = x0 + side + BAR_GAP;
  for (let y = 0; y < side; y++) {
    const t = 1 - y / (side - 1);
    const color = colormap(t);
    for (let dx = 0; dx < BAR_W; dx++) canvas.set(bx + dx, TOP + y, color);
  }
  canvas.rect(bx - 1, TOP - 1, BAR_W + 2, side + 2, BLACK);
  canvas.text(x0, TOP + side + 6, formatValue(panel.lo), GREY);
  const hiLabel = formatValue(panel.hi);
  canvas.text(x0 + side - textWidth(hiLabel), TOP + side + 16, hiLabel, GREY);
}

export interface PanelData {
  truth: GridExport;
  estimate: GridExport;
  error: number[][];
}

export function loadPanelData(truthPath: string, estimatePath: string): PanelData {
  const truth = parseGridCsv(truthPath);
  const estimate = parseGridCsv(estimatePath);
  return { truth, estimate, error: absoluteDifference(truth, estimate) };
}

export function renderPanels(truthPath: string, estimatePath: string, outPath: string): PanelData {
  const data = loadPanelData(truthPath, estimatePath);
  const flat = (m: number[][]) => m.flat();
  const sharedLo = Math.min(...flat(data.truth.values), ...flat(data.estimate.values));
  const sharedHi = Math.max(...flat(data.truth.values), ...flat(data.estimate.values));
  const panels: Panel[] = [
    { title: "q true", values: data.truth.values, lo: sharedLo, hi: sharedHi },
    { title: "q hat", values: data.estimate.values, lo: sharedLo, hi: sharedHi },
    {
      title: "|q hat - q true|",
      values: data.error,
      lo: 0,
      hi: Math.max(...flat(data.error)),
    },
  ];
  const side = Math.max(96, Math.min(384, data.truth.xs.length * CELL));
  const panelW = side + BAR_GAP + BAR_W + PANEL_GAP;
  const canvas = new Raster(12 + 3 * panelW, TOP + side + BOTTOM);
  panels.forEach((panel, k) => drawPanel(canvas, 12 + k * panelW, panel, side));
  writeFileSync(outPath, encodePng(canvas.width, canvas.height, canvas.pixels));
  return data;
}
