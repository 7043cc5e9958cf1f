/**
 * Corpus file parsing: one JSON record per line, {"key", "vector", "text"?},
 * one dimension per file — the same contract the CLI ingests.
 */

import type { DocumentIn } from './api.js';

export class CorpusError extends Error {
  readonly line: number;

  constructor(line: number, message: string) {
    super(`line ${line}: ${message}`);
    this.line = line;
  }
}

export function parseCorpus(fileText: string): DocumentIn[] {
  const items: DocumentIn[] = [];
  const seen = new Set<string>();
  let dimension: number | null = null;
  const lines = fileText.split('\n');
  for (let i = 0; i < lines.length; i++) {
    const raw = lines[i];
    if (raw === undefined || raw.trim() === '') continue;
    const lineNo = i + 1;
    let record: unknown;
    try {
      record = JSON.parse(raw);
    } catch {
      throw new CorpusError(lineNo, 'invalid JSON');
    }
    if (typeof record !== 'object' || record === null || Array.isArray(record)) {
      throw new CorpusError(lineNo, 'each line must be a JSON object');
    }
    const { key, vector, text } = record as { key?: unknown; vector?: unknown; text?: unknown };
    if (typeof key !== 'string' || key.length === 0) {
      throw new CorpusError(lineNo, "record needs a non-empty string 'key'");
    }
    if (!Array.isArray(vector) || vector.length === 0 || !vector.every((x) => typeof x === 'number')) {
      throw new CorpusError(lineNo, "record needs a numeric array 'vector'");
    }
    if (dimension === null) {
      dimension = vector.length;
    } else if (vector.length !== dimension) {
      throw new CorpusError(lineNo, `vector has dimension ${vector.length}, expected ${dimension}`);
    }
    if (text !== undefined && text !== null && typeof text !== 'string') {
      throw new CorpusError(lineNo, "'text' must be a string when present");
    }
    if (seen.has(key)) {
      throw new CorpusError(lineNo, `duplicate key ${JSON.stringify(key)}`);
    }
    seen.add(key);
    items.push({ key, vector: vector as number[], text: (text as string | undefined) ?? null });
  }
  return items;
}

export function corpusDimension(items: DocumentIn[]): number {
  const first = items[0];
  if (!first) throw new Error('corpus is empty');
  return first.vector.length;
}
