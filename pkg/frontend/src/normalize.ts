/**
 * Text formatting and tokenization.
 *
 * Stories are lower-cased, special punctuation marks (em/en dashes,
 * ellipses) and duplicated terminal marks collapse to single dots, and the
 * result splits into word and punctuation tokens grouped into sentences.
 */

export interface Token {
  text: string;
  isPunct: boolean;
}

export function normalizeText(raw: string): string {
  let text = raw.toLowerCase();
  text = text.replace(/[—–]|--+/g, ' . ');
  text = text.replace(/…|\.\.\.+/g, ' . ');
  text = text.replace(/[“”«»]/g, '"').replace(/[‘’]/g, "'");
  // duplicated terminal marks ("?.", "!?", "..") become one dot
  text = text.replace(/[.!?][.!?\s]*[.!?]/g, ' . ');
  return text.replace(/\s+/g, ' ').trim();
}

const WORD_RE = /[a-z0-9]+(?:'[a-z]+)?/;
const PUNCT_RE = /[.,!?;:"'()]/;

export function tokenize(normalized: string): Token[] {
  const tokens: Token[] = [];
  let rest = normalized;
  while (rest.length > 0) {
    rest = rest.replace(/^\s+/, '');
    if (!rest) break;
    const word = rest.match(new RegExp(`^${WORD_RE.source}`));
    if (word) {
      tokens.push({ text: word[0], isPunct: false });
      rest = rest.slice(word[0].length);
      continue;
    }
    if (PUNCT_RE.test(rest[0])) {
      tokens.push({ text: rest[0], isPunct: true });
      rest = rest.slice(1);
      continue;
    }
    rest = rest.slice(1); // drop anything unrecognized
  }
  return tokens;
}

const SENTENCE_END = new Set(['.', '!', '?']);

/** Group tokens into sentences; a terminal mark closes the sentence. */
export function splitSentences(tokens: Token[]): Token[][] {
  const sentences: Token[][] = [];
  let current: Token[] = [];
  for (const token of tokens) {
    current.push(token);
    if (token.isPunct && SENTENCE_END.has(token.text)) {
      sentences.push(current);
      current = [];
    }
  }
  if (current.length > 0) {
    sentences.push(current);
  }
  return sentences.filter((s) => s.some((t) => !t.isPunct));
}
