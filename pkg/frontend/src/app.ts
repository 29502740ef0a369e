import { ApiError, ValidationApi } from './api.js';
import { MapView } from './map.js';
import { buildQueue, nextPendingIndex, QueueView, type QueueItem } from './queue.js';
import { Debouncer, Store } from './state.js';
import type {
  FeatureCollection,
  GovernmentProperties,
  MatchFilter,
  PredictionProperties,
  Stats,
  Verdict,
} from './types.js';

export interface AppElements {
  banner: HTMLElement;
  counts: HTMLElement;
  tauSlider: HTMLInputElement;
  tauValue: HTMLElement;
  dSlider: HTMLInputElement;
  dValue: HTMLElement;
  filterSelect: HTMLSelectElement;
  map: HTMLElement;
  queue: HTMLElement;
  detail: HTMLElement;
}

export interface AppOptions {
  validatorId?: string;
  debounceMs?: number;
}

/** Wires the service, view state, map, and validation queue together.
 *
 * Counts always come from /stats and layers from /predictions for the
 * same (tau, d), so the header can never disagree with the map.  Verdicts
 * render optimistically but the queue advances only after the service
 * acknowledgment; failures roll the optimistic badge back.
 */
export class App {
  readonly store = new Store();
  readonly api: ValidationApi;
  private readonly debouncer: Debouncer;
  private readonly mapView: MapView;
  private readonly queueView: QueueView;
  private readonly validatorId: string;

  private predictions: FeatureCollection<PredictionProperties> | null = null;
  private government: FeatureCollection<GovernmentProperties> | null = null;
  private stats: Stats | null = null;
  private overlay = new Map<string, Verdict>();
  private queueItems: QueueItem[] = [];
  private relocateTarget: string | null = null;
  private requestSeq = 0;
  private ownRevisions = new Map<string, number>();

  constructor(
    baseUrl: string,
    private readonly elements: AppElements,
    options: AppOptions = {},
  ) {
    this.api = new ValidationApi(baseUrl);
    this.validatorId = options.validatorId ?? 'webui';
    this.debouncer = new Debouncer(options.debounceMs ?? 250);
    this.mapView = new MapView(elements.map, {
      onSelectPrediction: (id) => this.select(id),
      onMapClick: (lon, lat) => this.handleMapClick(lon, lat),
    });
    this.queueView = new QueueView(elements.queue, {
      onApprove: (id) => void this.submitVerdict(id, 'approved'),
      onReject: (id) => void this.submitVerdict(id, 'rejected'),
      onRelocate: (id) => this.enterRelocateMode(id),
      onSelect: (id) => this.select(id),
    });
    this.bindControls();
  }

  private bindControls(): void {
    const { tauSlider, dSlider, filterSelect } = this.elements;
    tauSlider.addEventListener('input', () => {
      this.store.update({ tau: Number(tauSlider.value) });
      this.elements.tauValue.textContent = Number(tauSlider.value).toFixed(2);
      this.debouncer.schedule(() => void this.refresh());
    });
    dSlider.addEventListener('input', () => {
      this.store.update({ d: Number(dSlider.value) });
      this.elements.dValue.textContent = `${dSlider.value} m`;
      this.debouncer.schedule(() => void this.refresh());
    });
    filterSelect.addEventListener('change', () => {
      this.store.update({ filter: filterSelect.value as MatchFilter, queueCursor: 0 });
      void this.refresh();
    });
  }

  /** Fetch stats + layers for the current (tau, d, filter) and render. */
  async refresh(): Promise<void> {
    const state = this.store.get();
    const seq = ++this.requestSeq;
    try {
      const [stats, predictions, government] = await Promise.all([
        this.api.stats(state.tau, state.d),
        this.api.predictions(state.tau, state.d, state.filter),
        this.api.government(),
      ]);
      if (seq !== this.requestSeq) {
        return; // superseded by a newer request
      }
      this.stats = stats;
      this.predictions = predictions;
      this.government = government;
      this.overlay.clear(); // server state is now authoritative
      this.store.update({ offline: false });
      this.render();
    } catch (error) {
      if (error instanceof ApiError) {
        throw error;
      }
      this.store.update({ offline: true });
      this.renderBanner();
    }
  }

  private render(): void {
    this.renderBanner();
    this.renderCounts();
    if (this.predictions && this.government) {
      this.mapView.render(
        { predictions: this.withOverlay(this.predictions), government: this.government },
        this.store.get().selectedId,
      );
    }
    this.renderQueue();
    this.renderDetail();
  }

  private withOverlay(
    collection: FeatureCollection<PredictionProperties>,
  ): FeatureCollection<PredictionProperties> {
    if (this.overlay.size === 0) {
      return collection;
    }
    return {
      type: 'FeatureCollection',
      features: collection.features.map((f) => {
        const pending = this.overlay.get(f.properties.id);
        return pending ? { ...f, properties: { ...f.properties, verdict: pending } } : f;
      }),
    };
  }

  private renderBanner(): void {
    const state = this.store.get();
    const { banner } = this.elements;
    if (state.offline) {
      banner.textContent = 'Service unreachable - data may be stale';
      banner.className = 'banner offline';
    } else if (state.refreshPrompt) {
      banner.textContent = 'Verdict conflict - refresh to continue';
      banner.className = 'banner conflict';
    } else {
      banner.textContent = '';
      banner.className = 'banner hidden';
    }
  }

  private renderCounts(): void {
    if (!this.stats) {
      return;
    }
    const s = this.stats;
    this.elements.counts.textContent =
      `matched ${s.matched} | unmatched predictions ${s.unmatched_predictions} | ` +
      `unmatched government ${s.unmatched_government} | ` +
      `predictions ${s.predictions_total} / government ${s.government_total}`;
  }

  private renderQueue(): void {
    if (!this.predictions) {
      return;
    }
    this.queueItems = buildQueue(this.predictions.features, this.overlay);
    const cursor = nextPendingIndex(this.queueItems, 0);
    if (this.store.get().queueCursor !== cursor) {
      this.store.update({ queueCursor: cursor });
    }
    this.queueView.render(this.queueItems, cursor);
  }

  private renderDetail(): void {
    const { detail } = this.elements;
    const selected = this.store.get().selectedId;
    detail.replaceChildren();
    if (!selected || !this.predictions) {
      return;
    }
    const feature = this.predictions.features.find((f) => f.properties.id === selected);
    if (!feature) {
      return;
    }
    const props = feature.properties;
    const verdict = this.overlay.get(selected) ?? props.verdict;
    const rows: [string, string][] = [
      ['id', props.id],
      ['probability', props.probability.toFixed(4)],
      ['matched', props.matched ? `yes (${props.government_id})` : 'no'],
      ['distance to match', props.distance_to_match_m === null ? '-' : `${Math.round(props.distance_to_match_m)} m`],
      ['verdict', verdict ? `${verdict.decision} by ${verdict.validator_id} (rev ${verdict.revision})` : 'none'],
    ];
    const table = document.createElement('dl');
    table.className = 'detail-table';
    for (const [key, value] of rows) {
      const dt = document.createElement('dt');
      dt.textContent = key;
      const dd = document.createElement('dd');
      dd.textContent = value;
      table.append(dt, dd);
    }
    detail.appendChild(table);
  }

  select(id: string): void {
    this.store.update({ selectedId: id });
    this.render();
  }

  enterRelocateMode(id: string): void {
    this.relocateTarget = id;
    this.store.update({ relocateMode: true, selectedId: id });
    this.elements.map.classList.add('relocate-mode');
  }

  private handleMapClick(lon: number, lat: number): void {
    if (!this.store.get().relocateMode || !this.relocateTarget) {
      return;
    }
    const target = this.relocateTarget;
    this.relocateTarget = null;
    this.store.update({ relocateMode: false });
    this.elements.map.classList.remove('relocate-mode');
    void this.submitVerdict(target, 'relocated', { lat, lon });
  }

  /** Relocation entry point for non-mouse flows (and tests). */
  relocateAt(id: string, lat: number, lon: number): Promise<void> {
    return this.submitVerdict(id, 'relocated', { lat, lon });
  }

  async submitVerdict(
    id: string,
    decision: 'approved' | 'rejected' | 'relocated',
    location?: { lat: number; lon: number },
  ): Promise<void> {
    const revision = this.nextRevision(id);
    const optimistic: Verdict = {
      prediction_id: id,
      decision,
      validator_id: this.validatorId,
      revision,
      timestamp: new Date().toISOString(),
      corrected_lat: location?.lat ?? null,
      corrected_lon: location?.lon ?? null,
    };
    this.overlay.set(id, optimistic);
    this.render();
    try {
      const ack = await this.api.postVerdict({
        prediction_id: id,
        decision,
        validator_id: this.validatorId,
        revision,
        ...(location ? { corrected_location: location } : {}),
      });
      this.overlay.set(id, ack.verdict);
      this.ownRevisions.set(id, ack.verdict.revision);
      // durable on the service; now advance past the judged item
      await this.refresh();
    } catch (error) {
      this.overlay.delete(id);
      if (error instanceof ApiError && error.status === 409) {
        this.store.update({ refreshPrompt: true });
      }
      this.render();
      throw error;
    }
  }

  private nextRevision(id: string): number {
    const own = this.ownRevisions.get(id);
    if (own !== undefined) {
      return own + 1;
    }
    const feature = this.predictions?.features.find((f) => f.properties.id === id);
    const latest = feature?.properties.verdict;
    if (latest && latest.validator_id === this.validatorId) {
      return latest.revision + 1;
    }
    return 1;
  }

  /** Rendered layer counts, for consistency checks against /stats. */
  renderedCounts(): { predictions: number; government: number; matchLines: number } {
    const root = this.elements.map;
    return {
      predictions: root.querySelectorAll('circle.prediction').length,
      government: root.querySelectorAll('rect.government').length,
      matchLines: root.querySelectorAll('line.match-line').length,
    };
  }

  currentQueue(): QueueItem[] {
    return this.queueItems;
  }
}
