import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";

export interface OdNmsOptions {
  thIou?: number;
  delta?: number;
  psi?: number;
}

export interface SynthesisOptions {
  maxGroups?: number;
  maxMembers?: number;
  tau?: number;
  epsilon?: number;
  sigma?: number;
}

export type AnnotationDocument = Record<string, unknown>;

// Override with CROWDSYNTH_CLI when the executable is not on PATH.
const CLI = process.env.CROWDSYNTH_CLI ?? "crowdsynth";

function runCli(args: string[]): void {
  const proc = spawnSync(CLI, args, { encoding: "utf-8" });
  if (proc.error) {
    throw new Error(`failed to launch ${CLI}: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    throw new Error(
      `${CLI} ${args[0]} exited with status ${proc.status}: ${proc.stderr.trim()}`,
    );
  }
}

function withTempDir<T>(body: (dir: string) => T): T {
  const dir = mkdtempSync(path.join(tmpdir(), "crowdsynth-"));
  try {
    return body(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

/**
 * Depth-aware non-maximum suppression over plain arrays.
 *
 * `boxes` holds `[x, y, width, height]` rows, `scores` and `ods` hold one
 * value per row. Returns the kept row indices in descending score order.
 */
export function odNms(
  boxes: number[][],
  scores: number[],
  ods: number[],
  options: OdNmsOptions = {},
): number[] {
  boxes.forEach((row, i) => {
    if (row.length !== 4) {
      throw new Error(`boxes[${i}] has length ${row.length}, expected 4`);
    }
  });
  if (scores.length !== boxes.length) {
    throw new Error(
      `scores has length ${scores.length}, expected ${boxes.length} to match boxes`,
    );
  }
  if (ods.length !== boxes.length) {
    throw new Error(
      `ods has length ${ods.length}, expected ${boxes.length} to match boxes`,
    );
  }
  if (boxes.length === 0) {
    return [];
  }
  return withTempDir((dir) => {
    const inPath = path.join(dir, "detections.json");
    const outPath = path.join(dir, "kept.json");
    const indicesPath = path.join(dir, "indices.json");
    const doc = {
      detections: {
        "0": boxes.map((bbox, i) => ({ bbox, score: scores[i], od: ods[i] })),
      },
    };
    writeFileSync(inPath, JSON.stringify(doc));
    const args = ["odnms", "--dets", inPath, "--out", outPath, "--indices-out", indicesPath];
    if (options.thIou !== undefined) args.push("--th-iou", String(options.thIou));
    if (options.delta !== undefined) args.push("--delta", String(options.delta));
    if (options.psi !== undefined) args.push("--psi", String(options.psi));
    runCli(args);
    const kept = JSON.parse(readFileSync(indicesPath, "utf-8"));
    return kept.kept["0"] as number[];
  });
}

/**
 * Crowded copy-paste scene synthesis.
 *
 * Takes an annotation document, a patch library directory, and a seed, and
 * returns the augmented document parsed from the CLI output. The `text`
 * field carries the exact serialized bytes, which are reproducible for a
 * given seed and configuration.
 */
export function synthesize(
  annotations: AnnotationDocument,
  patchDir: string,
  seed: number,
  options: SynthesisOptions = {},
): { document: AnnotationDocument; text: string } {
  if (!Number.isInteger(seed) || seed < 0) {
    throw new Error(`seed must be a non-negative integer, got ${seed}`);
  }
  return withTempDir((dir) => {
    const inPath = path.join(dir, "annotations.json");
    const outPath = path.join(dir, "augmented.json");
    writeFileSync(inPath, JSON.stringify(annotations));
    const args = [
      "synth",
      "--in", inPath,
      "--patches", patchDir,
      "--out", outPath,
      "--seed", String(seed),
    ];
    if (options.maxGroups !== undefined) args.push("--max-groups", String(options.maxGroups));
    if (options.maxMembers !== undefined) args.push("--max-members", String(options.maxMembers));
    if (options.tau !== undefined) args.push("--tau", String(options.tau));
    if (options.epsilon !== undefined) args.push("--epsilon", String(options.epsilon));
    if (options.sigma !== undefined) args.push("--sigma", String(options.sigma));
    runCli(args);
    const text = readFileSync(outPath, "utf-8");
    return { document: JSON.parse(text), text };
  });
}
