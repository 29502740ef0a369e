import { App, type AppElements } from './app.js';

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get('api') ?? '';

const elements: AppElements = {
  banner: element('banner'),
  counts: element('counts'),
  tauSlider: element<HTMLInputElement>('tau'),
  tauValue: element('tau-value'),
  dSlider: element<HTMLInputElement>('d'),
  dValue: element('d-value'),
  filterSelect: element<HTMLSelectElement>('filter'),
  map: element('map'),
  queue: element('queue'),
  detail: element('detail'),
};

const app = new App(baseUrl, elements, { validatorId: params.get('validator') ?? 'webui' });
void app.refresh();
