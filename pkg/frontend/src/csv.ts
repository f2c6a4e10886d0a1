import type { RoundRecord } from "./types.js";

// CSV export of the server's metrics history. The numbers are written with
// String(), i.e. the shortest digit string that round-trips to the same
// float, so parsing the file recovers the server values bit for bit — the
// export is a faithful copy of the /metrics JSON, never a reformatting.

export const CSV_HEADER =
  "round,strategy,chosen_ids,batch_entropy,accuracy,select_ms,train_ms";

function num(value: number | null): string {
  return value === null ? "" : String(value);
}

export function metricsToCsv(records: RoundRecord[]): string {
  const lines = [CSV_HEADER];
  for (const r of records) {
    lines.push(
      [
        String(r.round),
        r.strategy,
        r.chosen_ids.join(";"),
        num(r.batch_entropy),
        num(r.accuracy),
        num(r.select_ms),
        num(r.train_ms),
      ].join(","),
    );
  }
  return lines.join("\n") + "\n";
}

/** Inverse of metricsToCsv; used to verify a round trip, not by the UI. */
export function parseMetricsCsv(text: string): RoundRecord[] {
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines[0] !== CSV_HEADER) {
    throw new Error(`bad header: ${lines[0]}`);
  }
  return lines.slice(1).map((line) => {
    const [round, strategy, chosen, entropy, accuracy, selectMs, trainMs] =
      line.split(",");
    return {
      round: Number(round),
      strategy,
      chosen_ids: chosen === "" ? [] : chosen.split(";").map(Number),
      batch_entropy: entropy === "" ? null : Number(entropy),
      accuracy: Number(accuracy),
      select_ms: Number(selectMs),
      train_ms: Number(trainMs),
    };
  });
}
