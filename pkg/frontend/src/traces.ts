/** Training-history figure: loss components and relative error vs epoch. */

import { writeFileSync } from "node:fs";

import { parseTraceCsv, type TraceTable } from "./csv.js";
import { SERIES_COLORS } from "./color.js";
import { encodePng } from "./png.js";
import { BLACK, GREY, Raster, textWidth, type Color } from "./raster.js";

const W = 560;
const PANEL_H = 200;
const MARGIN_L = 64;
const MARGIN_R = 16;
const GAP = 34;
const TOP = 22;
const BOTTOM = 30;

const LOG_FLOOR = 1e-16;

interface Series {
  name: string;
  values: number[];
  color: Color;
}

function drawLogPanel(
  canvas: Raster,
  y0: number,
  title: string,
  epochs: number[],
  series: Series[],
): void {
  const x0 = MARGIN_L;
  const plotW = W - MARGIN_L - MARGIN_R;
  canvas.rect(x0, y0, plotW, PANEL_H, BLACK);
  canvas.text(x0, y0 - 12, title);

  const finite = series.flatMap((s) => s.values.map((v) => Math.max(v, LOG_FLOOR)));
  let lo = Math.log10(Math.min(...finite));
  let hi = Math.log10(Math.max(...finite));
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const eLo = epochs[0];
  const eHi = epochs[epochs.length - 1];
  const xAt = (e: number) => x0 + ((e - eLo) / Math.max(1, eHi - eLo)) * (plotW - 1);
  const yAt = (v: number) =>
    y0 + PANEL_H - 1 - ((Math.log10(Math.max(v, LOG_FLOOR)) - lo) / (hi - lo)) * (PANEL_H - 1);

  // decade grid lines and tick labels
  for (let d = Math.ceil(lo); d <= Math.floor(hi); d++) {
    const y = Math.round(yAt(10 ** d));
    for (let x = x0 + 1; x < x0 + plotW - 1; x += 3) canvas.set(x, y, [225, 225, 225]);
    const label = `1e${d}`;
    canvas.text(x0 - textWidth(label) - 4, y - 3, label, GREY);
  }
  // epoch ticks at both ends
  canvas.text(x0, y0 + PANEL_H + 4, String(eLo), GREY);
  const hiLabel = String(eHi);
  canvas.text(x0 + plotW - textWidth(hiLabel), y0 + PANEL_H + 4, hiLabel, GREY);
  canvas.text(x0 + Math.floor(plotW / 2) - 15, y0 + PANEL_H + 4, "epoch", GREY);

  series.forEach((s, k) => {
    for (let i = 1; i < s.values.length; i++) {
      canvas.line(
        xAt(epochs[i - 1]),
        yAt(s.values[i - 1]),
        xAt(epochs[i]),
        yAt(s.values[i]),
        s.color,
      );
    }
    const lx = x0 + plotW + 2 - (k + 1) * 0; // legend inside, stacked
    canvas.text(x0 + 6, y0 + 6 + 10 * k, s.name, s.color);
  });
}

export function renderTraces(tracePath: string, outPath: string): TraceTable {
  const table = parseTraceCsv(tracePath);
  if (table.rows < 2) throw new Error(`${tracePath}: need at least 2 trace rows to plot`);
  const epochs = table.series.get("epoch");
  if (!epochs) throw new Error(`${tracePath}: no 'epoch' column`);

  const lossNames = ["total", "data", "divergence", "boundary", "seminorm", "tv"].filter(
    (name) => {
      const s = table.series.get(name);
      return s !== undefined && s.some((v) => v !== 0);
    },
  );
  const lossSeries: Series[] = lossNames.map((name, k) => ({
    name,
    values: table.series.get(name)!,
    color: SERIES_COLORS[k % SERIES_COLORS.length],
  }));
  if (lossSeries.length === 0) throw new Error(`${tracePath}: no loss columns to plot`);

  const canvas = new Raster(W, TOP + PANEL_H + GAP + PANEL_H + BOTTOM);
  drawLogPanel(canvas, TOP, "loss components", epochs, lossSeries);

  const err = table.series.get("rel_error");
  const errSeries: Series[] = [
    {
      name: "rel error",
      values: err && err.some((v) => Number.isFinite(v) && v > 0) ? err : table.series.get("total")!,
      color: SERIES_COLORS[3],
    },
  ];
  drawLogPanel(canvas, TOP + PANEL_H + GAP, "relative l2 error", epochs, errSeries);
  writeFileSync(outPath, encodePng(canvas.width, canvas.height, canvas.pixels));
  return table;
}
