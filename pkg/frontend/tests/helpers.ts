import { spawn, type ChildProcess } from 'node:child_process';
import { fileURLToPath } from 'node:url';
import { dirname, join } from 'node:path';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import type { AppElements } from '../src/app.js';

const here = dirname(fileURLToPath(import.meta.url));

export interface FixtureService {
  baseUrl: string;
  process: ChildProcess;
  stop: () => void;
}

/** Spawn the Python fixture service and wait until /stats responds. */
export async function startFixtureService(port: number): Promise<FixtureService> {
  const script = join(here, '..', 'scripts', 'fixture_service.py');
  const logDir = mkdtempSync(join(tmpdir(), 'valui-test-'));
  const child = spawn('python3', [script, '--port', String(port), '--dir', logDir], {
    stdio: ['ignore', 'pipe', 'pipe'],
  });
  let stderr = '';
  child.stderr?.on('data', (chunk) => {
    stderr += String(chunk);
  });
  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30_000;
  for (;;) {
    if (child.exitCode !== null) {
      throw new Error(`fixture service exited early: ${stderr}`);
    }
    try {
      const response = await fetch(`${baseUrl}/stats?tau=0&d=250`);
      if (response.ok) {
        break;
      }
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      child.kill();
      throw new Error(`fixture service did not come up in 30s: ${stderr}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  return { baseUrl, process: child, stop: () => child.kill() };
}

/** Minimal DOM skeleton matching index.html's element contract. */
export function buildDom(): AppElements {
  document.body.innerHTML = `
    <div id="banner" class="banner hidden"></div>
    <div id="counts"></div>
    <input id="tau" type="range" min="0" max="1" step="0.01" value="0.5" />
    <span id="tau-value"></span>
    <input id="d" type="range" min="50" max="1000" step="10" value="250" />
    <span id="d-value"></span>
    <select id="filter">
      <option value="unmatched" selected>unmatched</option>
      <option value="matched">matched</option>
      <option value="all">all</option>
    </select>
    <div id="map"></div>
    <div id="queue"></div>
    <div id="detail"></div>
  `;
  const get = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;
  return {
    banner: get('banner'),
    counts: get('counts'),
    tauSlider: get<HTMLInputElement>('tau'),
    tauValue: get('tau-value'),
    dSlider: get<HTMLInputElement>('d'),
    dValue: get('d-value'),
    filterSelect: get<HTMLSelectElement>('filter'),
    map: get('map'),
    queue: get('queue'),
    detail: get('detail'),
  };
}
