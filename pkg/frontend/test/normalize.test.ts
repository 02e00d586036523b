import { describe, expect, it } from 'vitest';

import { normalizeText, splitSentences, tokenize } from '../src/normalize.js';

describe('normalizeText', () => {
  it('lower-cases', () => {
    expect(normalizeText('The CAT')).toBe('the cat');
  });

  it('turns dashes and ellipses into dots', () => {
    expect(normalizeText('left — right')).toBe('left . right');
    expect(normalizeText('left -- right')).toBe('left . right');
    expect(normalizeText('wait...')).toBe('wait .');
  });

  it('collapses duplicated terminal marks', () => {
    expect(normalizeText('really?! yes')).toBe('really . yes');
    expect(normalizeText('end?.')).toBe('end .');
  });

  it('collapses whitespace', () => {
    expect(normalizeText('a\n\n b\t c')).toBe('a b c');
  });
});

describe('tokenize', () => {
  it('splits words and punctuation', () => {
    const tokens = tokenize('the cat ran, then slept.');
    expect(tokens.map((t) => t.text)).toEqual(['the', 'cat', 'ran', ',', 'then', 'slept', '.']);
    expect(tokens.map((t) => t.isPunct)).toEqual([false, false, false, true, false, false, true]);
  });

  it('keeps intra-word apostrophes', () => {
    expect(tokenize("don't stop").map((t) => t.text)).toEqual(["don't", 'stop']);
  });
});

describe('splitSentences', () => {
  it('closes a sentence at terminal marks', () => {
    const sentences = splitSentences(tokenize('one two. three four!'));
    expect(sentences.length).toBe(2);
    expect(sentences[0].map((t) => t.text)).toEqual(['one', 'two', '.']);
  });

  it('keeps a trailing unterminated sentence', () => {
    const sentences = splitSentences(tokenize('one two. three'));
    expect(sentences.length).toBe(2);
    expect(sentences[1].map((t) => t.text)).toEqual(['three']);
  });

  it('drops punctuation-only fragments', () => {
    expect(splitSentences(tokenize('. .'))).toEqual([]);
  });
});
