import type { PointFeature, PredictionProperties, Verdict } from './types.js';

export interface QueueItem {
  id: string;
  probability: number;
  matched: boolean;
  verdict: Verdict | null;
}

export interface QueueActions {
  onApprove: (id: string) => void;
  onReject: (id: string) => void;
  onRelocate: (id: string) => void;
  onSelect: (id: string) => void;
}

/** Worklist ordered by decreasing confidence; already-judged items keep
 * their place but show a badge, and the cursor skips them. */
export function buildQueue(
  features: PointFeature<PredictionProperties>[],
  overlay: Map<string, Verdict>,
): QueueItem[] {
  const items = features.map((f) => ({
    id: f.properties.id,
    probability: f.properties.probability,
    matched: f.properties.matched,
    verdict: overlay.get(f.properties.id) ?? f.properties.verdict,
  }));
  items.sort((a, b) => b.probability - a.probability || a.id.localeCompare(b.id));
  return items;
}

export function nextPendingIndex(items: QueueItem[], from: number): number {
  for (let i = Math.max(0, from); i < items.length; i += 1) {
    if (!items[i].verdict) {
      return i;
    }
  }
  return -1;
}

export class QueueView {
  constructor(
    private readonly container: HTMLElement,
    private readonly actions: QueueActions,
  ) {}

  render(items: QueueItem[], cursor: number): void {
    this.container.replaceChildren();
    const list = document.createElement('ol');
    list.className = 'queue-list';
    items.forEach((item, index) => {
      const entry = document.createElement('li');
      entry.className = 'queue-item' + (index === cursor ? ' current' : '');
      entry.dataset.predictionId = item.id;

      const label = document.createElement('span');
      label.className = 'queue-label';
      label.textContent = `${item.id} - p=${item.probability.toFixed(3)}`;
      label.addEventListener('click', () => this.actions.onSelect(item.id));
      entry.appendChild(label);

      if (item.verdict) {
        const badge = document.createElement('span');
        badge.className = `verdict-badge verdict-${item.verdict.decision}`;
        badge.textContent = item.verdict.decision;
        entry.appendChild(badge);
      } else if (index === cursor) {
        for (const [name, handler] of [
          ['approve', this.actions.onApprove],
          ['reject', this.actions.onReject],
          ['relocate', this.actions.onRelocate],
        ] as const) {
          const button = document.createElement('button');
          button.className = `action-${name}`;
          button.textContent = name;
          button.addEventListener('click', () => handler(item.id));
          entry.appendChild(button);
        }
      }
      list.appendChild(entry);
    });
    this.container.appendChild(list);
  }
}
