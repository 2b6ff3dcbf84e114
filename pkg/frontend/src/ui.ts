// DOM layer: renders BoardState into a root element and wires the
// keyboard-first controls (a = approve, r = reject, s = skip the top item).

import { ReviewItem } from './api.js';
import { highlightOverlap } from './highlight.js';
import { BoardState, ReviewBoard } from './state.js';

export interface UiHandles {
  render(state: BoardState): void;
  destroy(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function renderCounters(state: BoardState): HTMLElement {
  const bar = el('div', 'counters');
  const counters = state.counters;
  if (!counters) {
    bar.append(el('span', 'muted', 'loading metrics…'));
    return bar;
  }
  const done = counters.decided;
  const total = counters.items;
  const percent = total > 0 ? Math.round((done / total) * 100) : 0;
  bar.append(
    el('span', 'counter approved', `✓ ${counters.approved} approved`),
    el('span', 'counter rejected', `✗ ${counters.rejected} rejected`),
    el('span', 'counter pending', `${counters.pending} pending`),
    el('span', 'counter progress', `${done}/${total} (${percent}%)`),
  );
  if (counters.precision_vs_truth !== null) {
    bar.append(
      el(
        'span',
        'counter precision',
        `precision vs truth ${(counters.precision_vs_truth * 100).toFixed(1)}%`,
      ),
    );
  }
  return bar;
}

function renderItem(item: ReviewItem, board: ReviewBoard, state: BoardState, isTop: boolean): HTMLElement {
  const card = el('article', isTop ? 'item top' : 'item');
  card.dataset.pairId = item.pair_id;

  const header = el('header');
  header.append(
    el('span', 'ids', `${item.source_id} → ${item.target_id}`),
    el('span', 'score', item.score.toFixed(4)),
  );
  card.append(header);

  const error = state.itemErrors[item.pair_id];
  if (error) {
    card.append(el('div', 'item-error', `decision failed: ${error}`));
  }

  const bodies = el('div', 'bodies');
  const sourcePane = el('section', 'body source');
  sourcePane.append(el('h3', undefined, item.source_id));
  const sourceText = el('div', 'text');
  sourceText.innerHTML = highlightOverlap(item.source_body, item.overlap_terms);
  sourcePane.append(sourceText);
  const targetPane = el('section', 'body target');
  targetPane.append(el('h3', undefined, item.target_id));
  const targetText = el('div', 'text');
  targetText.innerHTML = highlightOverlap(item.target_body, item.overlap_terms);
  targetPane.append(targetText);
  bodies.append(sourcePane, targetPane);
  card.append(bodies);

  const actions = el('div', 'actions');
  const approve = el('button', 'approve', isTop ? 'Approve (a)' : 'Approve');
  approve.onclick = () => void board.decide(item.pair_id, 'approve');
  const reject = el('button', 'reject', isTop ? 'Reject (r)' : 'Reject');
  reject.onclick = () => void board.decide(item.pair_id, 'reject');
  const skip = el('button', 'skip', isTop ? 'Skip (s)' : 'Skip');
  skip.onclick = () => board.skip(item.pair_id);
  if (state.inFlight.has(item.pair_id)) {
    approve.disabled = reject.disabled = skip.disabled = true;
  }
  actions.append(approve, reject, skip);
  card.append(actions);
  return card;
}

export function mountBoard(root: HTMLElement, board: ReviewBoard): UiHandles {
  const onKey = (event: KeyboardEvent) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === 'INPUT' || target.tagName === 'TEXTAREA')) {
      return;
    }
    const top = board.state().queue[0];
    if (!top) {
      return;
    }
    if (event.key === 'a') {
      void board.decide(top.pair_id, 'approve');
    } else if (event.key === 'r') {
      void board.decide(top.pair_id, 'reject');
    } else if (event.key === 's') {
      board.skip(top.pair_id);
    }
  };
  document.addEventListener('keydown', onKey);

  function render(state: BoardState): void {
    root.textContent = '';

    const page = el('div', 'board');
    const title = el('h1', undefined, `Review: ${state.projectId}`);
    page.append(title, renderCounters(state));

    if (state.toast) {
      const toast = el('div', 'toast', state.toast);
      const dismiss = el('button', 'dismiss', '×');
      dismiss.onclick = () => board.clearToast();
      toast.append(dismiss);
      page.append(toast);
    }

    const controls = el('div', 'controls');
    const exportLink = el('a', 'export', 'Export approved CSV');
    (exportLink as HTMLAnchorElement).href = board.exportUrl();
    (exportLink as HTMLAnchorElement).setAttribute('download', `${state.projectId}-approved.csv`);
    const rescore = el('button', 'rescore', state.rescoreRunning ? 'Rescoring…' : 'Rescore pending');
    rescore.disabled = state.rescoreRunning;
    rescore.onclick = () => void board.rescoreAndReload('vsm');
    const refresh = el('button', 'refresh', 'Refresh');
    refresh.onclick = () => void board.load();
    controls.append(exportLink, rescore, refresh);
    page.append(controls);

    if (state.loading && state.queue.length === 0) {
      page.append(el('div', 'empty muted', 'loading queue…'));
    } else if (state.complete) {
      const banner = el('div', 'complete');
      banner.append(
        el('h2', undefined, 'All links reviewed'),
        el('p', undefined, 'Export the approved set above to produce training data.'),
      );
      page.append(banner);
    } else {
      const queue = el('div', 'queue');
      state.queue.forEach((item, index) => {
        queue.append(renderItem(item, board, state, index === 0));
      });
      page.append(queue);
    }
    root.append(page);
  }

  return {
    render,
    destroy() {
      document.removeEventListener('keydown', onKey);
    },
  };
}
