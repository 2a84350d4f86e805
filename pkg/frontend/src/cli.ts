#!/usr/bin/env node
/**
 * plot panels <qtrue.csv> <qhat.csv> -o fig.png
 * plot traces <trace.csv> -o curves.png
 */

import { existsSync } from "node:fs";

import { renderPanels } from "./panels.js";
import { renderTraces } from "./traces.js";

function usage(): string {
  return [
    "usage:",
    "  plot panels <qtrue.csv> <qhat.csv> -o <fig.png>",
    "  plot traces <trace.csv> -o <curves.png>",
  ].join("\n");
}

function extractOutput(args: string[]): { positional: string[]; out: string | null } {
  const positional: string[] = [];
  let out: string | null = null;
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "-o" || args[i] === "--out") {
      out = args[i + 1] ?? null;
      i++;
    } else {
      positional.push(args[i]);
    }
  }
  return { positional, out };
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (!command || command === "-h" || command === "--help") {
    console.log(usage());
    return command ? 0 : 2;
  }
  const { positional, out } = extractOutput(rest);
  try {
    if (command === "panels") {
      if (positional.length !== 2 || !out) {
        console.error(usage());
        return 2;
      }
      for (const path of positional) {
        if (!existsSync(path)) throw new Error(`missing input file: ${path}`);
      }
      renderPanels(positional[0], positional[1], out);
      console.log(`wrote ${out}`);
      return 0;
    }
    if (command === "traces") {
      if (positional.length !== 1 || !out) {
        console.error(usage());
        return 2;
      }
      if (!existsSync(positional[0])) throw new Error(`missing input file: ${positional[0]}`);
      renderTraces(positional[0], out);
      console.log(`wrote ${out}`);
      return 0;
    }
    console.error(`unknown command: ${command}\n${usage()}`);
    return 2;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("cli.ts")) {
  process.exit(main(process.argv.slice(2)));
}
