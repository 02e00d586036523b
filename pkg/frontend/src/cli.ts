#!/usr/bin/env node
/** Command line entry: export stories into transcript + activation files. */

import { parseArgs } from 'node:util';

import { exportStories, exportTranscripts } from './export.js';
import { resolveModel } from './model.js';

const USAGE =
  'usage: synsem-export export (--stories DIR | --transcripts DIR) ' +
  '[--model NAME] [--layers 0,9] --out DIR';

function main(): number {
  const { values, positionals } = parseArgs({
    allowPositionals: true,
    options: {
      stories: { type: 'string' },
      transcripts: { type: 'string' },
      model: { type: 'string', default: 'hash-lm-v1' },
      layers: { type: 'string', default: '0,9' },
      out: { type: 'string' },
    },
  });
  const sourceCount = Number(Boolean(values.stories)) + Number(Boolean(values.transcripts));
  if (positionals[0] !== 'export' || sourceCount !== 1 || !values.out) {
    console.error(USAGE);
    return 2;
  }
  const layers = String(values.layers)
    .split(',')
    .map((s) => Number.parseInt(s.trim(), 10));
  if (layers.length === 0 || layers.some((l) => Number.isNaN(l))) {
    throw new Error(`cannot parse layers '${values.layers}'`);
  }
  const model = resolveModel(String(values.model));
  const manifest = values.stories
    ? exportStories(String(values.stories), model, layers, String(values.out))
    : exportTranscripts(String(values.transcripts), model, layers, String(values.out));
  for (const story of manifest.stories) {
    console.log(`${story.story}: ${story.n_words} words, layers [${layers.join(', ')}]`);
  }
  return 0;
}

try {
  process.exit(main());
} catch (err: unknown) {
  const e = err as Error;
  console.error(JSON.stringify({ error: String(e.message ?? e) }));
  process.exit(e?.name === 'AlignmentError' ? 3 : 2);
}
