/**
 * Story export: raw text plus a word-timing alignment file in, transcript
 * JSONL / story metadata / per-layer activation tensors out.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { encodeTensorF32 } from './dten.js';
import { ActivationModel } from './model.js';
import { normalizeText, splitSentences, Token, tokenize } from './normalize.js';
import { assignHeads, tagPos, validateHeads } from './tagger.js';

export interface AlignmentFile {
  story: string;
  tr_times: number[];
  words: { word: string; onset: number; offset: number }[];
}

export interface ExportedToken {
  text: string;
  pos: string;
  dep: string;
  head: number;
  onset: number;
  offset: number;
}

export interface ExportedSentence {
  story: string;
  sent_index: number;
  tokens: ExportedToken[];
}

export class AlignmentError extends Error {
  constructor(story: string, sentIndex: number, message: string) {
    super(`story ${story}, sentence ${sentIndex}: ${message}`);
    this.name = 'AlignmentError';
  }
}

/**
 * Attach onsets to tokens by walking the forced-alignment word list in
 * order. Punctuation is zero-width at the preceding word's offset. A word
 * that does not match the next alignment entry fails with the sentence
 * named.
 */
export function alignSentences(
  story: string,
  sentences: Token[][],
  alignment: AlignmentFile,
): ExportedSentence[] {
  let cursor = 0;
  let clock = alignment.words.length > 0 ? alignment.words[0].onset : 0;
  const out: ExportedSentence[] = [];
  sentences.forEach((tokens, sentIndex) => {
    const timed: { token: Token; onset: number; offset: number }[] = [];
    for (const token of tokens) {
      if (token.isPunct) {
        timed.push({ token, onset: clock, offset: clock });
        continue;
      }
      const entry = alignment.words[cursor];
      if (!entry) {
        throw new AlignmentError(story, sentIndex, `no alignment entry left for '${token.text}'`);
      }
      if (entry.word.toLowerCase() !== token.text) {
        throw new AlignmentError(
          story,
          sentIndex,
          `token '${token.text}' does not match alignment word '${entry.word}'`,
        );
      }
      timed.push({ token, onset: entry.onset, offset: entry.offset });
      clock = entry.offset;
      cursor += 1;
    }
    const tags = tokens.map(tagPos);
    const annotations = assignHeads(tags);
    validateHeads(annotations);
    out.push({
      story,
      sent_index: sentIndex,
      tokens: timed.map((t, i) => ({
        text: t.token.text,
        pos: annotations[i].pos,
        dep: annotations[i].dep,
        head: annotations[i].head,
        onset: t.onset,
        offset: t.offset,
      })),
    });
  });
  if (cursor !== alignment.words.length) {
    throw new AlignmentError(
      story,
      out.length - 1,
      `${alignment.words.length - cursor} alignment entries were never consumed`,
    );
  }
  return out;
}

export interface StoryExport {
  story: string;
  nWords: number;
  files: string[];
}

export function exportStory(
  storyId: string,
  text: string,
  alignment: AlignmentFile,
  model: ActivationModel,
  layers: number[],
  outDir: string,
): StoryExport {
  const sentences = splitSentences(tokenize(normalizeText(text)));
  const exported = alignSentences(storyId, sentences, alignment);
  const words = exported.flatMap((s) => s.tokens.map((t) => t.text));

  const files: string[] = [];
  const sentencesPath = path.join(outDir, `${storyId}.sentences.jsonl`);
  fs.writeFileSync(sentencesPath, exported.map((s) => JSON.stringify(s)).join('\n') + '\n');
  files.push(sentencesPath);

  const metaPath = path.join(outDir, `${storyId}.meta.json`);
  fs.writeFileSync(metaPath, JSON.stringify({ story: storyId, tr_times: alignment.tr_times }) + '\n');
  files.push(metaPath);

  const activations = model.storyActivations(words, layers);
  for (const layer of layers) {
    const rows = activations.get(layer)!;
    const flat = new Float32Array(rows.length * model.dim);
    rows.forEach((row, r) => {
      for (let i = 0; i < model.dim; i++) {
        flat[r * model.dim + i] = Math.fround(row[i]);
      }
    });
    const tensorPath = path.join(outDir, `${storyId}.l${layer}.dten`);
    fs.writeFileSync(tensorPath, encodeTensorF32(flat, [rows.length, model.dim]));
    files.push(tensorPath);
  }
  return { story: storyId, nWords: words.length, files };
}

export interface ExportManifest {
  model: string;
  model_version: string;
  layers: number[];
  stories: { story: string; n_words: number }[];
}

/**
 * Activations for already-tokenized transcripts ("<id>.sentences.jsonl" +
 * "<id>.meta.json", e.g. the synthesized variant stories the pipeline
 * writes). Token texts are used verbatim, so tensor rows match the
 * transcript's words one-to-one by construction.
 */
export function exportTranscripts(
  transcriptsDir: string,
  model: ActivationModel,
  layers: number[],
  outDir: string,
): ExportManifest {
  const entries = fs
    .readdirSync(transcriptsDir)
    .filter((f: string) => f.endsWith('.sentences.jsonl'))
    .sort();
  if (entries.length === 0) {
    throw new Error(`no .sentences.jsonl transcripts found in ${transcriptsDir}`);
  }
  fs.mkdirSync(outDir, { recursive: true });
  const manifest: ExportManifest = {
    model: model.name,
    model_version: model.version,
    layers,
    stories: [],
  };
  for (const entry of entries) {
    const storyId = entry.replace(/\.sentences\.jsonl$/, '');
    const lines = fs
      .readFileSync(path.join(transcriptsDir, entry), 'utf-8')
      .trim()
      .split('\n')
      .map((l) => JSON.parse(l) as ExportedSentence);
    const words = lines.flatMap((s) => s.tokens.map((t) => t.text));
    const activations = model.storyActivations(words, layers);
    for (const layer of layers) {
      const rows = activations.get(layer)!;
      const flat = new Float32Array(rows.length * model.dim);
      rows.forEach((row, r) => {
        for (let i = 0; i < model.dim; i++) {
          flat[r * model.dim + i] = Math.fround(row[i]);
        }
      });
      fs.writeFileSync(
        path.join(outDir, `${storyId}.l${layer}.dten`),
        encodeTensorF32(flat, [rows.length, model.dim]),
      );
    }
    manifest.stories.push({ story: storyId, n_words: words.length });
  }
  fs.writeFileSync(path.join(outDir, 'manifest.json'), JSON.stringify(manifest, null, 2) + '\n');
  return manifest;
}

export function exportStories(
  storiesDir: string,
  model: ActivationModel,
  layers: number[],
  outDir: string,
): ExportManifest {
  const entries = fs
    .readdirSync(storiesDir)
    .filter((f: string) => f.endsWith('.txt'))
    .sort();
  if (entries.length === 0) {
    throw new Error(`no .txt stories found in ${storiesDir}`);
  }
  fs.mkdirSync(outDir, { recursive: true });
  const manifest: ExportManifest = {
    model: model.name,
    model_version: model.version,
    layers,
    stories: [],
  };
  for (const entry of entries) {
    const storyId = entry.replace(/\.txt$/, '');
    const alignPath = path.join(storiesDir, `${storyId}.align.json`);
    if (!fs.existsSync(alignPath)) {
      throw new Error(`missing alignment file ${alignPath}`);
    }
    const text = fs.readFileSync(path.join(storiesDir, entry), 'utf-8');
    const alignment = JSON.parse(fs.readFileSync(alignPath, 'utf-8')) as AlignmentFile;
    const result = exportStory(storyId, text, alignment, model, layers, outDir);
    manifest.stories.push({ story: result.story, n_words: result.nWords });
  }
  fs.writeFileSync(
    path.join(outDir, 'manifest.json'),
    JSON.stringify(manifest, null, 2) + '\n',
  );
  return manifest;
}
