#!/usr/bin/env node
import { pathToFileURL } from "node:url";

import { encodeBatches, loadEncoder } from "./encoder.js";
import { EmbedgenError, concatText, parseQuestions } from "./questions.js";
import { randomUnitVector } from "./random.js";
import { writeTable } from "./table.js";

export const EMBED_DIM = 512;

export interface Options {
  input: string;
  output: string;
  random: boolean;
  seed: number;
  batchSize: number;
}

const USAGE =
  "usage: embedgen <input-questions> <output-table> [--random] [--seed N] [--batch-size N]";

export function parseArgs(argv: string[]): Options {
  const positional: string[] = [];
  let random = false;
  let seed = 0;
  let batchSize = 32;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--random") {
      random = true;
    } else if (arg === "--seed" || arg === "--batch-size") {
      const value = argv[++i];
      if (value === undefined || !/^-?\d+$/.test(value)) {
        throw new EmbedgenError(`${arg} expects an integer\n${USAGE}`);
      }
      if (arg === "--seed") seed = Number(value);
      else batchSize = Number(value);
    } else if (arg.startsWith("-")) {
      throw new EmbedgenError(`unknown option ${arg}\n${USAGE}`);
    } else {
      positional.push(arg);
    }
  }
  if (positional.length !== 2) throw new EmbedgenError(USAGE);
  if (batchSize < 1) throw new EmbedgenError("--batch-size must be >= 1");
  return { input: positional[0], output: positional[1], random, seed, batchSize };
}

export async function run(options: Options): Promise<void> {
  const questions = parseQuestions(options.input);
  if (options.random) {
    const rows: [string, Float64Array][] = questions.map((q) => [
      q.id,
      randomUnitVector(options.seed, q.id, EMBED_DIM),
    ]);
    writeTable(options.output, EMBED_DIM, rows);
    return;
  }
  const encoder = await loadEncoder();
  const vectors = await encodeBatches(encoder, questions.map(concatText), options.batchSize);
  const rows: [string, number[]][] = questions.map((q, i) => {
    if (vectors[i].length !== EMBED_DIM) {
      throw new EmbedgenError(
        `encoder returned ${vectors[i].length} dims for ${q.id}, expected ${EMBED_DIM}`);
    }
    return [q.id, vectors[i]];
  });
  writeTable(options.output, EMBED_DIM, rows);
}

export async function main(argv: string[]): Promise<number> {
  try {
    await run(parseArgs(argv));
    return 0;
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    process.stderr.write(`embedgen: error: ${message.replace(/\s+/g, " ")}\n`);
    return 1;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
