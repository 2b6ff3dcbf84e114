// Bootstrap: configuration comes from the page URL, e.g.
//   index.html?base=http://127.0.0.1:8340&project=cm1&k=20&reviewer=amy

import { createClient } from './api.js';
import { ReviewBoard } from './state.js';
import { mountBoard } from './ui.js';

function config() {
  const params = new URLSearchParams(window.location.search);
  return {
    base: params.get('base') ?? 'http://127.0.0.1:8340',
    project: params.get('project') ?? '',
    k: Number(params.get('k') ?? '20'),
    reviewer: params.get('reviewer') ?? 'reviewer',
  };
}

export function start(root: HTMLElement): ReviewBoard | null {
  const { base, project, k, reviewer } = config();
  if (!project) {
    root.textContent = 'Missing ?project=<id> in the URL.';
    return null;
  }
  const client = createClient(base);
  const board = new ReviewBoard(client, project, k, { reviewer });
  const ui = mountBoard(root, board);
  board.subscribe((state) => ui.render(state));
  void board.load();
  return board;
}

const rootElement = document.getElementById('app');
if (rootElement) {
  start(rootElement);
}
