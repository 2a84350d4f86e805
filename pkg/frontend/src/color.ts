/** Perceptually uniform colormap (viridis anchors, linearly interpolated). */

import type { Color } from "./raster.js";

const ANCHORS: Color[] = [
  [68, 1, 84],
  [71, 24, 106],
  [72, 40, 120],
  [69, 55, 129],
  [64, 70, 136],
  [57, 85, 140],
  [51, 98, 141],
  [45, 112, 142],
  [40, 125, 142],
  [36, 138, 141],
  [32, 150, 139],
  [31, 163, 135],
  [41, 175, 127],
  [62, 187, 115],
  [92, 198, 97],
  [127, 207, 75],
  [165, 213, 49],
  [205, 217, 25],
  [243, 229, 30],
  [253, 231, 37],
];

export function colormap(t: number): Color {
  const clamped = Math.min(1, Math.max(0, t));
  const pos = clamped * (ANCHORS.length - 1);
  const i = Math.min(ANCHORS.length - 2, Math.floor(pos));
  const frac = pos - i;
  const a = ANCHORS[i];
  const b = ANCHORS[i + 1];
  return [
    Math.round(a[0] + frac * (b[0] - a[0])),
    Math.round(a[1] + frac * (b[1] - a[1])),
    Math.round(a[2] + frac * (b[2] - a[2])),
  ];
}

export const SERIES_COLORS: Color[] = [
  [31, 119, 180],
  [255, 127, 14],
  [44, 160, 44],
  [214, 39, 40],
  [148, 103, 189],
  [140, 86, 75],
  [227, 119, 194],
];
