/**
 * Figure catalog: how each supported figure id selects and arranges the
 * campaign data.  Every figure is one chart rendered from either aggregate
 * rows (line plots) or raw rows (the ratio CDF).
 */

import { Row, SchemaError, filterRows, meanCpDb } from "./csv.js";
import { ChartSpec, Series, renderChart } from "./svg.js";

export const FIGURE_IDS = [
  "fig8a",
  "fig8b",
  "fig9a",
  "fig9b",
  "fig11",
  "fig12",
  "fig13",
  "fig14",
] as const;

export type FigureId = (typeof FIGURE_IDS)[number];

export interface FigureSpec {
  id: FigureId;
  csvPath: string;
  outPath: string;
  filters: Record<string, string>;
}

function groupKey(r: Row): string {
  return r.predictor ? `${r.estimator}/${r.predictor}` : r.estimator;
}

function aggSeries(
  rows: Row[],
  value: (r: Row) => number | null,
  expectAxis?: string,
): Series[] {
  const agg = rows.filter((r) => r.kind === "agg");
  if (expectAxis && agg.length && agg.some((r) => r.axis !== expectAxis)) {
    throw new SchemaError(
      `figure expects a ${expectAxis} sweep, file has axis ${agg[0].axis}`,
    );
  }
  const groups = new Map<string, Array<[number, number]>>();
  for (const r of agg) {
    const v = value(r);
    if (v === null) continue;
    const key = groupKey(r);
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push([r.axisValue, v]);
  }
  return [...groups.entries()].map(([label, points]) => ({ label, points }));
}

function requireData(series: Series[], what: string): Series[] {
  if (!series.length || series.every((s) => !s.points.length)) {
    throw new SchemaError(`no data for ${what} after filtering`);
  }
  return series;
}

/** Empirical CDF over the raw per-trial efficiency ratios. */
export function aserCdf(rows: Row[]): Series[] {
  const raw = rows.filter((r) => r.kind === "raw" && r.aser !== null);
  const groups = new Map<string, number[]>();
  for (const r of raw) {
    const key = groupKey(r);
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push(r.aser!);
  }
  return [...groups.entries()].map(([label, values]) => {
    values.sort((a, b) => a - b);
    const points: Array<[number, number]> = values.map((v, i) => [
      v,
      (i + 1) / values.length,
    ]);
    return { label, points, markers: false };
  });
}

function build(id: FigureId, rows: Row[]): ChartSpec {
  switch (id) {
    case "fig8a": {
      const se = aggSeries(rows, (r) => r.se, "n_f");
      const upper = aggSeries(rows, (r) => r.seUpper, "n_f");
      const ref = upper.slice(0, 1).map((s) => ({
        ...s,
        label: "perfect CSI",
        dashed: true,
        color: "#404040",
      }));
      return {
        title: "Downlink spectral efficiency vs prediction horizon",
        xLabel: "predicted frames",
        yLabel: "sum SE (bits/s/Hz)",
        series: requireData([...se, ...ref], "fig8a"),
      };
    }
    case "fig8b":
      return {
        title: "Efficiency-ratio CDF",
        xLabel: "SE ratio",
        yLabel: "P(ratio <= x)",
        series: requireData(aserCdf(rows), "fig8b"),
        yRange: [0, 1.02],
      };
    case "fig9a":
      return {
        title: "Prediction error vs horizon",
        xLabel: "predicted frames",
        yLabel: "NMSE (dB)",
        series: requireData(aggSeries(rows, meanCpDb, "n_f"), "fig9a"),
      };
    case "fig9b":
      return {
        title: "Prediction error vs SNR",
        xLabel: "SNR (dB)",
        yLabel: "NMSE (dB)",
        series: requireData(aggSeries(rows, meanCpDb, "snr"), "fig9b"),
      };
    case "fig11":
      return {
        title: "Estimation error vs SNR",
        xLabel: "SNR (dB)",
        yLabel: "NMSE (dB)",
        series: requireData(
          aggSeries(rows, (r) => r.nmseCeDb, "snr"),
          "fig11",
        ),
      };
    case "fig12": {
      const agg = rows.filter((r) => r.kind === "agg");
      const groups = new Map<string, Array<[number, number]>>();
      for (const r of agg) {
        const key = `${groupKey(r)} @ ${r.axisValue}`;
        const points: Array<[number, number]> = [];
        r.ber.forEach((b, i) => {
          if (b !== null) points.push([i, b]);
        });
        if (points.length) groups.set(key, points);
      }
      const series = [...groups.entries()].map(([label, points]) => ({
        label,
        points,
      }));
      return {
        title: "Detection BER vs refinement iteration",
        xLabel: "iteration",
        yLabel: "BER",
        series: requireData(series, "fig12"),
      };
    }
    case "fig13":
      return {
        title: "Estimation error vs pilot overhead",
        xLabel: "dedicated pilot overhead",
        yLabel: "NMSE (dB)",
        series: requireData(
          aggSeries(rows, (r) => r.nmseCeDb, "pilot_overhead"),
          "fig13",
        ),
      };
    case "fig14":
      return {
        title: "Estimation error vs array size",
        xLabel: "BS antennas",
        yLabel: "NMSE (dB)",
        series: requireData(
          aggSeries(rows, (r) => r.nmseCeDb, "n_antennas"),
          "fig14",
        ),
      };
  }
}

export function renderFigure(id: FigureId, rows: Row[],
                             filters: Record<string, string> = {}): string {
  if (!FIGURE_IDS.includes(id)) {
    throw new SchemaError(`unknown figure id ${id}`);
  }
  return renderChart(build(id, filterRows(rows, filters)));
}
