#!/usr/bin/env node
/**
 * plots <figure-id> --csv <path> --out <path> [--filter k=v ...]
 *
 * Renders one figure from a campaign CSV to a standalone SVG file.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseCampaignCsv } from "./csv.js";
import { FIGURE_IDS, FigureId, renderFigure } from "./figures.js";

function usage(): never {
  console.error(
    `usage: plots <figure-id> --csv <path> --out <path> [--filter k=v ...]\n` +
      `figure ids: ${FIGURE_IDS.join(", ")}`,
  );
  process.exit(2);
}

export function main(argv: string[]): number {
  if (argv.length < 1) usage();
  const id = argv[0] as FigureId;
  let csvPath = "";
  let outPath = "";
  const filters: Record<string, string> = {};
  for (let i = 1; i < argv.length; i++) {
    switch (argv[i]) {
      case "--csv":
        csvPath = argv[++i];
        break;
      case "--out":
        outPath = argv[++i];
        break;
      case "--filter": {
        const kv = argv[++i];
        const eq = kv?.indexOf("=") ?? -1;
        if (eq <= 0) usage();
        filters[kv.slice(0, eq)] = kv.slice(eq + 1);
        break;
      }
      default:
        usage();
    }
  }
  if (!FIGURE_IDS.includes(id) || !csvPath || !outPath) usage();
  const rows = parseCampaignCsv(readFileSync(csvPath, "utf-8"));
  const svg = renderFigure(id, rows, filters);
  writeFileSync(outPath, svg);
  console.log(`wrote ${outPath}`);
  return 0;
}

const invoked = process.argv[1] ?? "";
if (invoked.endsWith("cli.ts") || invoked.endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
