/**
 * Campaign CSV parsing.
 *
 * Files start with a `#` timestamp comment, then a fixed header:
 * kind,axis,axis_value,seed,snr_db,estimator,predictor,nmse_ce_db,
 * nmse_cp_db_f1..f5,se,se_upper,aser,ber_i0..i4,runtime_ms
 * Empty cells decode to null.
 */

export interface Row {
  kind: "raw" | "agg";
  axis: string;
  axisValue: number;
  seed: number | null;
  snrDb: number | null;
  estimator: string;
  predictor: string;
  nmseCeDb: number | null;
  nmseCpDb: (number | null)[];
  se: number | null;
  seUpper: number | null;
  aser: number | null;
  ber: (number | null)[];
  runtimeMs: number | null;
}

export const HEADER =
  "kind,axis,axis_value,seed,snr_db,estimator,predictor,nmse_ce_db," +
  "nmse_cp_db_f1,nmse_cp_db_f2,nmse_cp_db_f3,nmse_cp_db_f4,nmse_cp_db_f5," +
  "se,se_upper,aser,ber_i0,ber_i1,ber_i2,ber_i3,ber_i4,runtime_ms";

export class SchemaError extends Error {}

function num(cell: string): number | null {
  if (cell === "" || cell === undefined) return null;
  const v = Number(cell);
  if (Number.isNaN(v)) throw new SchemaError(`non-numeric cell: ${cell}`);
  return v;
}

export function parseCampaignCsv(text: string): Row[] {
  const lines = text.split(/\r?\n/).filter(
    (l) => l.length > 0 && !l.startsWith("#"),
  );
  if (lines.length === 0) throw new SchemaError("empty file");
  if (lines[0] !== HEADER) {
    throw new SchemaError(
      `unexpected header; expected "${HEADER.slice(0, 40)}...", got "${lines[0].slice(0, 40)}..."`,
    );
  }
  const rows: Row[] = [];
  for (const line of lines.slice(1)) {
    const c = line.split(",");
    if (c.length !== 22) {
      throw new SchemaError(`expected 22 cells, got ${c.length}: ${line}`);
    }
    if (c[0] !== "raw" && c[0] !== "agg") {
      throw new SchemaError(`unknown row kind ${c[0]}`);
    }
    rows.push({
      kind: c[0],
      axis: c[1],
      axisValue: num(c[2]) ?? NaN,
      seed: num(c[3]),
      snrDb: num(c[4]),
      estimator: c[5],
      predictor: c[6],
      nmseCeDb: num(c[7]),
      nmseCpDb: c.slice(8, 13).map(num),
      se: num(c[13]),
      seUpper: num(c[14]),
      aser: num(c[15]),
      ber: c.slice(16, 21).map(num),
      runtimeMs: num(c[21]),
    });
  }
  return rows;
}

/** Apply key=value filters against estimator/predictor/kind/axis columns. */
export function filterRows(
  rows: Row[],
  filters: Record<string, string>,
): Row[] {
  return rows.filter((r) => {
    for (const [key, value] of Object.entries(filters)) {
      switch (key) {
        case "estimator":
          if (r.estimator !== value) return false;
          break;
        case "predictor":
          if (r.predictor !== value) return false;
          break;
        case "kind":
          if (r.kind !== value) return false;
          break;
        case "axis":
          if (r.axis !== value) return false;
          break;
        case "snr_db":
          if (r.snrDb !== Number(value)) return false;
          break;
        default:
          throw new SchemaError(`unknown filter column ${key}`);
      }
    }
    return true;
  });
}

/** Mean of the populated prediction-error cells of one row, in dB. */
export function meanCpDb(row: Row): number | null {
  const vals = row.nmseCpDb.filter((v): v is number => v !== null);
  if (!vals.length) return null;
  const lin = vals.map((v) => Math.pow(10, v / 10));
  return 10 * Math.log10(lin.reduce((a, b) => a + b, 0) / lin.length);
}
