// Wire contract of the rating service. Field names match the server exactly.

export interface PairView {
  pair_id: string;
  audio_a: string;
  audio_b: string;
  completed: number;
  total: number;
}

export interface DoneView {
  done: true;
  completed: number;
}

export type NextPairResponse = PairView | DoneView;

export function isDone(r: NextPairResponse): r is DoneView {
  return (r as DoneView).done === true;
}

export type Scale = 1 | 2 | 3 | 4 | 5;
export type Preference = 'A' | 'B' | 'TIE';

export const SCALE_VALUES: readonly Scale[] = [1, 2, 3, 4, 5];
export const RUBRIC_KEYS = ['human_like', 'appropriate', 'complete'] as const;
export type RubricKey = (typeof RUBRIC_KEYS)[number];

export interface RatingPayload {
  pair_id: string;
  rater_id: string;
  naturalness_a: Scale;
  naturalness_b: Scale;
  clarity_a: Scale;
  clarity_b: Scale;
  preference: Preference;
  human_like: boolean;
  appropriate: boolean;
  complete: boolean;
}

export interface Summary {
  n_ratings: number;
  naturalness_human: number | null;
  naturalness_model: number | null;
  clarity_human: number | null;
  clarity_model: number | null;
  preference_human_pct: number;
  preference_model_pct: number;
  preference_tie_pct: number;
  rubric_pass_rates: Record<string, number | null>;
}
