import type {
  FeatureCollection,
  GovernmentProperties,
  MatchFilter,
  PredictionProperties,
  Stats,
  VerdictAck,
  VerdictRequest,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** Thin typed client over the validation service endpoints. */
export class ValidationApi {
  constructor(private readonly baseUrl: string) {}

  private async getJson<T>(path: string, params: Record<string, string>): Promise<T> {
    const query = new URLSearchParams(params).toString();
    const response = await fetch(`${this.baseUrl}${path}${query ? `?${query}` : ''}`);
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return (await response.json()) as T;
  }

  predictions(tau: number, d: number, filter: MatchFilter): Promise<FeatureCollection<PredictionProperties>> {
    return this.getJson('/predictions', { tau: String(tau), d: String(d), matched: filter });
  }

  government(): Promise<FeatureCollection<GovernmentProperties>> {
    return this.getJson('/government', {});
  }

  stats(tau: number, d: number): Promise<Stats> {
    return this.getJson('/stats', { tau: String(tau), d: String(d) });
  }

  async postVerdict(request: VerdictRequest): Promise<VerdictAck> {
    const response = await fetch(`${this.baseUrl}/verdicts`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(request),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return (await response.json()) as VerdictAck;
  }

  exportValidated(): Promise<FeatureCollection<Record<string, unknown>>> {
    return this.getJson('/export', { format: 'geojson' });
  }
}
