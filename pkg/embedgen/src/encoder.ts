import { EmbedgenError } from "./questions.js";

export interface SentenceEncoder {
  embed(texts: string[]): Promise<{ arraySync(): number[][]; dispose(): void }>;
}

const SETUP_HINT =
  "sentence encoder unavailable: install @tensorflow/tfjs and " +
  "@tensorflow-models/universal-sentence-encoder, and pre-cache the model " +
  "for offline use, or rerun with --random";

/** Load the published 512-dim sentence encoder; fails with setup
 * instructions when the packages or the cached model are missing. */
export async function loadEncoder(): Promise<SentenceEncoder> {
  let use;
  try {
    await import("@tensorflow/tfjs");
    use = await import("@tensorflow-models/universal-sentence-encoder");
  } catch (err) {
    throw new EmbedgenError(`${SETUP_HINT} (${(err as Error).message})`);
  }
  try {
    return await use.load();
  } catch (err) {
    throw new EmbedgenError(`${SETUP_HINT} (${(err as Error).message})`);
  }
}

export async function encodeBatches(encoder: SentenceEncoder, texts: string[],
                                    batchSize: number): Promise<number[][]> {
  const rows: number[][] = [];
  for (let start = 0; start < texts.length; start += batchSize) {
    const tensor = await encoder.embed(texts.slice(start, start + batchSize));
    rows.push(...tensor.arraySync());
    tensor.dispose();
  }
  return rows;
}
