import { extentOf, project, unproject, type XY } from './mercator.js';
import type {
  FeatureCollection,
  GovernmentProperties,
  PointFeature,
  PredictionProperties,
} from './types.js';

const SVG_NS = 'http://www.w3.org/2000/svg';

export interface MapData {
  predictions: FeatureCollection<PredictionProperties>;
  government: FeatureCollection<GovernmentProperties>;
}

export interface MapCallbacks {
  onSelectPrediction: (id: string) => void;
  onMapClick: (lon: number, lat: number) => void;
}

function projected(feature: PointFeature<unknown>): XY {
  const [lon, lat] = feature.geometry.coordinates;
  return project(lon, lat);
}

/** SVG map with a government layer, a prediction layer, and connector
 * lines (with distance labels) between matched pairs.  North is up. */
export class MapView {
  private readonly svg: SVGSVGElement;
  private extent: { minX: number; minY: number; maxX: number; maxY: number } | null = null;

  constructor(container: HTMLElement, private readonly callbacks: MapCallbacks) {
    this.svg = document.createElementNS(SVG_NS, 'svg');
    this.svg.setAttribute('class', 'map-canvas');
    this.svg.setAttribute('width', '100%');
    this.svg.setAttribute('height', '100%');
    this.svg.addEventListener('click', (event) => this.handleClick(event));
    container.appendChild(this.svg);
  }

  private handleClick(event: MouseEvent): void {
    if (!this.extent) {
      return;
    }
    const target = event.target as Element;
    const id = target.getAttribute('data-prediction-id');
    if (id) {
      this.callbacks.onSelectPrediction(id);
      return;
    }
    const rect = this.svg.getBoundingClientRect();
    if (rect.width === 0 || rect.height === 0) {
      return;
    }
    const fx = (event.clientX - rect.left) / rect.width;
    const fy = (event.clientY - rect.top) / rect.height;
    const x = this.extent.minX + fx * (this.extent.maxX - this.extent.minX);
    const y = this.extent.maxY - fy * (this.extent.maxY - this.extent.minY);
    const { lon, lat } = unproject(x, y);
    this.callbacks.onMapClick(lon, lat);
  }

  /** lon/lat for a fractional position inside the current viewport;
   * used by tests and keyboard-driven relocation. */
  pointAtFraction(fx: number, fy: number): { lon: number; lat: number } | null {
    if (!this.extent) {
      return null;
    }
    const x = this.extent.minX + fx * (this.extent.maxX - this.extent.minX);
    const y = this.extent.maxY - fy * (this.extent.maxY - this.extent.minY);
    return unproject(x, y);
  }

  render(data: MapData, selectedId: string | null): void {
    const points = [...data.government.features, ...data.predictions.features].map(projected);
    this.extent = extentOf(points);
    while (this.svg.firstChild) {
      this.svg.removeChild(this.svg.firstChild);
    }
    if (!this.extent) {
      return;
    }
    const { minX, minY, maxX, maxY } = this.extent;
    this.svg.setAttribute('viewBox', `${minX} ${-maxY} ${maxX - minX} ${maxY - minY}`);
    const markerSize = Math.max(8, (maxX - minX) / 120);

    const governmentById = new Map<string, XY>();
    const governmentLayer = this.layer('government-layer');
    for (const feature of data.government.features) {
      const { x, y } = projected(feature);
      governmentById.set(feature.properties.id, { x, y });
      const square = document.createElementNS(SVG_NS, 'rect');
      square.setAttribute('class', 'government');
      square.setAttribute('data-government-id', feature.properties.id);
      square.setAttribute('x', String(x - markerSize / 2));
      square.setAttribute('y', String(-y - markerSize / 2));
      square.setAttribute('width', String(markerSize));
      square.setAttribute('height', String(markerSize));
      governmentLayer.appendChild(square);
    }

    const linkLayer = this.layer('match-layer');
    const predictionLayer = this.layer('prediction-layer');
    for (const feature of data.predictions.features) {
      const { x, y } = projected(feature);
      const props = feature.properties;
      if (props.matched && props.government_id) {
        const partner = governmentById.get(props.government_id);
        if (partner) {
          const line = document.createElementNS(SVG_NS, 'line');
          line.setAttribute('class', 'match-line');
          line.setAttribute('x1', String(x));
          line.setAttribute('y1', String(-y));
          line.setAttribute('x2', String(partner.x));
          line.setAttribute('y2', String(-partner.y));
          linkLayer.appendChild(line);
          const label = document.createElementNS(SVG_NS, 'text');
          label.setAttribute('class', 'match-distance');
          label.setAttribute('x', String((x + partner.x) / 2));
          label.setAttribute('y', String(-(y + partner.y) / 2));
          label.textContent = `${Math.round(props.distance_to_match_m ?? 0)} m`;
          linkLayer.appendChild(label);
        }
      }
      const circle = document.createElementNS(SVG_NS, 'circle');
      const classes = ['prediction', props.matched ? 'matched' : 'unmatched'];
      if (props.verdict) {
        classes.push(`verdict-${props.verdict.decision}`);
      }
      if (props.id === selectedId) {
        classes.push('selected');
      }
      circle.setAttribute('class', classes.join(' '));
      circle.setAttribute('data-prediction-id', props.id);
      circle.setAttribute('cx', String(x));
      circle.setAttribute('cy', String(-y));
      circle.setAttribute('r', String(markerSize * 0.6));
      predictionLayer.appendChild(circle);
    }
  }

  private layer(name: string): SVGGElement {
    const group = document.createElementNS(SVG_NS, 'g');
    group.setAttribute('class', name);
    this.svg.appendChild(group);
    return group;
  }
}
