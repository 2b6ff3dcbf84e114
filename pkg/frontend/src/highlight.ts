// Overlap-term highlighting: the only link "explanation" the board shows.

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

function escapeRegExp(text: string): string {
  return text.replace(/[.*+?^${}()|[\]\\]/g, '\\$&');
}

/**
 * Wrap case-insensitive word matches of the overlap terms in <mark>. The
 * body is HTML-escaped first, so the output is safe to assign to innerHTML.
 * Terms come from the alnum tokenizer; longer terms match first so a term
 * that contains another is not split.
 */
export function highlightOverlap(body: string, terms: string[]): string {
  const escaped = escapeHtml(body);
  const usable = terms.filter((t) => t.length > 0);
  if (usable.length === 0) {
    return escaped;
  }
  const alternation = [...usable]
    .sort((a, b) => b.length - a.length)
    .map(escapeRegExp)
    .join('|');
  const pattern = new RegExp(`(?<![0-9A-Za-z_])(${alternation})(?![0-9A-Za-z_])`, 'gi');
  return escaped.replace(pattern, '<mark>$1</mark>');
}
