import { readFileSync } from "node:fs";

export interface Question {
  id: string;
  subject: string;
  body: string;
  category: string;
  label?: string;
}

export class EmbedgenError extends Error {}

/** Parse a UTF-8 question file: one JSON object per line, order preserved. */
export function parseQuestions(path: string): Question[] {
  const text = readFileSync(path, "utf-8");
  const questions: Question[] = [];
  const seen = new Set<string>();
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let record: unknown;
    try {
      record = JSON.parse(line);
    } catch (err) {
      throw new EmbedgenError(`${path}:${i + 1}: malformed line: ${(err as Error).message}`);
    }
    const rec = record as Record<string, unknown>;
    const id = typeof rec.id === "string" ? rec.id : "";
    if (!id) throw new EmbedgenError(`${path}:${i + 1}: missing or empty id`);
    if (seen.has(id)) throw new EmbedgenError(`${path}:${i + 1}: duplicate id ${JSON.stringify(id)}`);
    seen.add(id);
    const subject = typeof rec.subject === "string" ? rec.subject : "";
    const body = typeof rec.body === "string" ? rec.body : "";
    if (!subject && !body) {
      throw new EmbedgenError(`${path}:${i + 1}: subject and body both empty (${id})`);
    }
    questions.push({
      id,
      subject,
      body,
      category: typeof rec.category === "string" ? rec.category : "",
      label: typeof rec.label === "string" ? rec.label : undefined,
    });
  }
  return questions;
}

/** Subject and body joined with a single space; an empty side drops out. */
export function concatText(q: Question): string {
  if (!q.subject) return q.body;
  if (!q.body) return q.subject;
  return `${q.subject} ${q.body}`;
}
