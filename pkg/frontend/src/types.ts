/** Payload types of the validation service (JSON over HTTP). */

export type MatchFilter = 'all' | 'matched' | 'unmatched';

export type Decision = 'approved' | 'rejected' | 'relocated';

export interface Verdict {
  prediction_id: string;
  decision: Decision;
  validator_id: string;
  revision: number;
  timestamp: string;
  corrected_lat: number | null;
  corrected_lon: number | null;
}

export interface PredictionProperties {
  id: string;
  probability: number;
  matched: boolean;
  government_id: string | null;
  distance_to_match_m: number | null;
  degenerate_fallback: boolean;
  verdict: Verdict | null;
}

export interface PointFeature<P> {
  type: 'Feature';
  geometry: { type: 'Point'; coordinates: [number, number] };
  properties: P;
}

export interface FeatureCollection<P> {
  type: 'FeatureCollection';
  features: PointFeature<P>[];
}

export interface GovernmentProperties {
  id: string;
  name?: string;
}

export interface Stats {
  matched: number;
  unmatched_government: number;
  unmatched_predictions: number;
  government_total: number;
  predictions_total: number;
  tau: number;
  d: number;
}

export interface VerdictAck {
  status: 'recorded' | 'duplicate';
  verdict: Verdict;
}

export interface VerdictRequest {
  prediction_id: string;
  decision: Decision;
  validator_id: string;
  revision: number;
  corrected_location?: { lat: number; lon: number };
}
