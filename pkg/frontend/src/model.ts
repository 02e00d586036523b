/**
 * Activation model backends.
 *
 * A backend maps word tokens to per-layer activation rows. Words are split
 * into sub-word pieces, pieces are processed causally in fixed-size
 * sections, and piece activations are summed back to word level, so every
 * story yields one (words x dim) matrix per layer.
 *
 * The built-in "hash-lm" backend is fully deterministic (pure function of
 * the text), which pins exporter output byte-for-byte for a given model
 * version. Pretrained-transformer backends can implement the same interface.
 */

export interface ActivationModel {
  readonly name: string;
  readonly version: string;
  readonly nLayers: number; // contextual layers stacked over the embedding layer 0
  readonly dim: number;
  /** Per-layer activations for one story's words: layer -> words x dim. */
  storyActivations(words: string[], layers: number[]): Map<number, Float64Array[]>;
}

export const SECTION_TOKENS = 256;
const PIECE_LEN = 4;
const MAX_SINGLE_PIECE = 6;

/** Split a word into sub-word pieces; short words stay whole. */
export function subwordPieces(word: string): string[] {
  if (word.length <= MAX_SINGLE_PIECE) {
    return [word];
  }
  const pieces: string[] = [];
  for (let i = 0; i < word.length; i += PIECE_LEN) {
    pieces.push((i === 0 ? '' : '##') + word.slice(i, i + PIECE_LEN));
  }
  return pieces;
}

// -- deterministic pseudo-randomness ----------------------------------------

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function seededVector(key: string, dim: number): Float64Array {
  const rand = mulberry32(fnv1a(key));
  const out = new Float64Array(dim);
  for (let i = 0; i < dim; i++) {
    out[i] = 2 * rand() - 1;
  }
  return out;
}

function seededMatrix(key: string, dim: number): Float64Array {
  const rand = mulberry32(fnv1a(key));
  const out = new Float64Array(dim * dim);
  const scale = 1 / Math.sqrt(dim);
  for (let i = 0; i < out.length; i++) {
    out[i] = (2 * rand() - 1) * scale;
  }
  return out;
}

// -- hash language model -----------------------------------------------------

export class HashLm implements ActivationModel {
  readonly name = 'hash-lm';
  readonly version: string;
  readonly nLayers: number;
  readonly dim: number;
  private readonly mix: Float64Array[];
  private readonly ctx: Float64Array[];
  private readonly embCache = new Map<string, Float64Array>();

  constructor(version = 'hash-lm-v1', nLayers = 13, dim = 64) {
    this.version = version;
    this.nLayers = nLayers;
    this.dim = dim;
    this.mix = [];
    this.ctx = [];
    for (let l = 1; l < nLayers; l++) {
      this.mix.push(seededMatrix(`${version}|mix|${l}`, dim));
      this.ctx.push(seededMatrix(`${version}|ctx|${l}`, dim));
    }
  }

  private embedding(piece: string): Float64Array {
    let vec = this.embCache.get(piece);
    if (!vec) {
      vec = seededVector(`${this.version}|emb|${piece}`, this.dim);
      this.embCache.set(piece, vec);
    }
    return vec;
  }

  storyActivations(words: string[], layers: number[]): Map<number, Float64Array[]> {
    const maxLayer = Math.max(...layers);
    if (maxLayer >= this.nLayers || Math.min(...layers) < 0) {
      throw new Error(`layers must lie in [0, ${this.nLayers}), got ${JSON.stringify(layers)}`);
    }
    const pieces: string[] = [];
    const wordOf: number[] = [];
    words.forEach((word, w) => {
      for (const piece of subwordPieces(word)) {
        pieces.push(piece);
        wordOf.push(w);
      }
    });

    const wanted = new Set(layers);
    const result = new Map<number, Float64Array[]>();
    for (const layer of layers) {
      result.set(layer, words.map(() => new Float64Array(this.dim)));
    }

    // process causally per fixed-size section; context never crosses sections
    for (let start = 0; start < pieces.length; start += SECTION_TOKENS) {
      const section = pieces.slice(start, start + SECTION_TOKENS);
      let states: Float64Array[] = section.map((p) => Float64Array.from(this.embedding(p)));
      if (wanted.has(0)) {
        this.accumulate(result.get(0)!, states, wordOf, start);
      }
      const running = new Float64Array(this.dim);
      for (let layer = 1; layer <= maxLayer; layer++) {
        running.fill(0);
        const next: Float64Array[] = [];
        const mix = this.mix[layer - 1];
        const ctx = this.ctx[layer - 1];
        for (let t = 0; t < states.length; t++) {
          for (let i = 0; i < this.dim; i++) {
            running[i] += (states[t][i] - running[i]) / (t + 1); // causal mean
          }
          const h = new Float64Array(this.dim);
          for (let i = 0; i < this.dim; i++) {
            let acc = 0;
            const row = i * this.dim;
            for (let j = 0; j < this.dim; j++) {
              acc += mix[row + j] * states[t][j] + ctx[row + j] * running[j];
            }
            h[i] = Math.tanh(acc) + states[t][i] * 0.5;
          }
          next.push(h);
        }
        states = next;
        if (wanted.has(layer)) {
          this.accumulate(result.get(layer)!, states, wordOf, start);
        }
      }
    }
    return result;
  }

  /** Sum piece rows into their word rows. */
  private accumulate(
    wordRows: Float64Array[],
    pieceStates: Float64Array[],
    wordOf: number[],
    offset: number,
  ): void {
    pieceStates.forEach((state, t) => {
      const row = wordRows[wordOf[offset + t]];
      for (let i = 0; i < this.dim; i++) {
        row[i] += state[i];
      }
    });
  }
}

export function resolveModel(name: string): ActivationModel {
  if (name === 'hash-lm' || name === 'hash-lm-v1') {
    return new HashLm('hash-lm-v1');
  }
  throw new Error(
    `unknown model '${name}'; available: hash-lm-v1 ` +
      '(pretrained backends plug in through the ActivationModel interface)',
  );
}
