/**
 * Deterministic rule-based part-of-speech tagging and dependency head
 * assignment.
 *
 * The rules favor structural validity over linguistic fidelity: every
 * sentence gets exactly one root and an acyclic head structure, which is
 * what the downstream transcript schema validates.
 */

import { Token } from './normalize.js';

export interface Annotation {
  pos: string;
  dep: string;
  head: number; // index into the sentence, -1 for the root
}

const DETERMINERS = new Set(['the', 'a', 'an', 'this', 'that', 'these', 'those', 'its', 'his', 'her', 'their', 'my', 'our', 'your']);
const ADPOSITIONS = new Set(['of', 'in', 'on', 'at', 'by', 'with', 'from', 'to', 'for', 'over', 'under', 'near', 'into', 'through', 'about', 'across']);
const PRONOUNS = new Set(['i', 'you', 'he', 'she', 'it', 'we', 'they', 'me', 'him', 'us', 'them', 'who', 'what']);
const CONJUNCTIONS = new Set(['and', 'or', 'but', 'nor', 'so', 'yet']);
const VERBS = new Set([
  'is', 'are', 'was', 'were', 'be', 'been', 'am', 'has', 'have', 'had', 'do', 'does', 'did',
  'will', 'would', 'can', 'could', 'should', 'may', 'might', 'went', 'go', 'goes', 'came',
  'come', 'said', 'say', 'says', 'saw', 'see', 'sees', 'ran', 'run', 'runs', 'sat', 'sit',
  'made', 'make', 'took', 'take', 'knew', 'know', 'found', 'find', 'gave', 'give', 'told',
  'tell', 'felt', 'feel', 'kept', 'keep', 'began', 'begin', 'left', 'heard', 'hear',
  'slept', 'sleep', 'sang', 'sing', 'stood', 'stand', 'fell', 'fall', 'grew', 'grow',
  'flew', 'fly', 'met', 'meet', 'got', 'get', 'put', 'held', 'hold', 'wrote', 'write',
  'spoke', 'speak', 'brought', 'bring', 'thought', 'think',
]);
const ADVERBS = new Set(['not', 'very', 'never', 'always', 'often', 'again', 'soon', 'here', 'there', 'now', 'then', 'too', 'also', 'just', 'still']);
const ADJECTIVES = new Set(['big', 'small', 'old', 'young', 'good', 'bad', 'long', 'short', 'high', 'low', 'little', 'great', 'new', 'dark', 'bright', 'cold', 'warm', 'quiet', 'loud', 'happy', 'sad']);

export function tagPos(token: Token): string {
  const w = token.text;
  if (token.isPunct) return 'PUNCT';
  if (/^\d+$/.test(w)) return 'NUM';
  if (DETERMINERS.has(w)) return 'DET';
  if (ADPOSITIONS.has(w)) return 'ADP';
  if (PRONOUNS.has(w)) return 'PRON';
  if (CONJUNCTIONS.has(w)) return 'CCONJ';
  if (VERBS.has(w)) return 'VERB';
  if (ADVERBS.has(w) || w.endsWith('ly')) return 'ADV';
  if (ADJECTIVES.has(w) || /(?:ful|ous|ive|able|ible|al|ish)$/.test(w)) return 'ADJ';
  if (/(?:ed|ing|ize|ise)$/.test(w) && w.length > 4) return 'VERB';
  return 'NOUN';
}

function nextOfPos(tags: string[], start: number, wanted: Set<string>): number {
  for (let i = start + 1; i < tags.length; i++) {
    if (wanted.has(tags[i])) return i;
  }
  return -1;
}

function nearestVerb(tags: string[], i: number, skip: number): number {
  let best = -1;
  let bestDist = Infinity;
  for (let j = 0; j < tags.length; j++) {
    if (j !== i && j !== skip && tags[j] === 'VERB') {
      const dist = Math.abs(j - i);
      if (dist < bestDist) {
        best = j;
        bestDist = dist;
      }
    }
  }
  return best;
}

const NOMINAL = new Set(['NOUN', 'PRON', 'NUM']);

/**
 * Assign one root and heads for every other token.
 *
 * The root is the first verb (else the first nominal, else token 0);
 * modifiers attach to the next nominal to their right, nominals and
 * leftovers attach to the root. Every non-root head chain therefore ends at
 * the root in at most two hops.
 */
export function assignHeads(tags: string[]): Annotation[] {
  const n = tags.length;
  let root = tags.indexOf('VERB');
  if (root < 0) root = tags.findIndex((t) => NOMINAL.has(t));
  if (root < 0) root = 0;

  const annotations: Annotation[] = [];
  for (let i = 0; i < n; i++) {
    const tag = tags[i];
    if (i === root) {
      annotations.push({ pos: tag, dep: 'root', head: -1 });
      continue;
    }
    let head = -1;
    let dep = 'dep';
    if (tag === 'DET' || tag === 'ADJ' || tag === 'NUM') {
      head = nextOfPos(tags, i, new Set(['NOUN']));
      dep = tag === 'DET' ? 'det' : tag === 'ADJ' ? 'amod' : 'nummod';
    } else if (tag === 'ADP') {
      head = nextOfPos(tags, i, new Set(['NOUN', 'PRON', 'NUM']));
      dep = 'case';
    } else if (tag === 'ADV') {
      head = nearestVerb(tags, i, -1);
      dep = 'advmod';
    } else if (NOMINAL.has(tag)) {
      head = root;
      dep = i < root ? 'nsubj' : 'obj';
    } else if (tag === 'VERB') {
      head = root;
      dep = 'conj';
    } else if (tag === 'CCONJ') {
      head = nextOfPos(tags, i, new Set(['NOUN', 'VERB', 'PRON', 'ADJ']));
      dep = 'cc';
    } else if (tag === 'PUNCT') {
      head = root;
      dep = 'punct';
    }
    if (head < 0 || head === i) {
      head = root === i ? -1 : root;
    }
    annotations.push({ pos: tag, dep, head });
  }
  return annotations;
}

/**
 * Modifier chains can only point at nominals/verbs/root, and those point at
 * the root, so cycles cannot arise; this is a belt-and-braces check used by
 * tests and the export path.
 */
export function validateHeads(annotations: Annotation[]): void {
  const n = annotations.length;
  annotations.forEach((a, i) => {
    if (a.head === i) throw new Error(`token ${i} heads itself`);
    if (a.head !== -1 && (a.head < 0 || a.head >= n)) {
      throw new Error(`token ${i} has head ${a.head} outside [0, ${n})`);
    }
  });
  for (let i = 0; i < n; i++) {
    const seen = new Set<number>();
    let j = i;
    while (annotations[j].head !== -1) {
      if (seen.has(j)) throw new Error(`cycle through token ${i}`);
      seen.add(j);
      j = annotations[j].head;
    }
  }
}
