import { ConflictError, NetworkError, type RatingApi } from '../src/api.js';
import type { NextPairResponse, RatingPayload, Summary } from '../src/types.js';

/** In-memory stand-in honoring the service's assignment and duplicate rules. */
export class FakeApi implements RatingApi {
  submissions: RatingPayload[] = [];
  failNextSubmit = false;

  constructor(private readonly pairIds: string[]) {}

  async nextPair(raterId: string): Promise<NextPairResponse> {
    const rated = new Set(
      this.submissions.filter((s) => s.rater_id === raterId).map((s) => s.pair_id),
    );
    const next = this.pairIds.find((id) => !rated.has(id));
    if (next === undefined) {
      return { done: true, completed: rated.size };
    }
    return {
      pair_id: next,
      audio_a: `${next}-a.wav`,
      audio_b: `${next}-b.wav`,
      completed: rated.size,
      total: this.pairIds.length,
    };
  }

  async submitRating(payload: RatingPayload): Promise<void> {
    if (this.failNextSubmit) {
      this.failNextSubmit = false;
      throw new NetworkError('socket hang up');
    }
    const dup = this.submissions.some(
      (s) => s.pair_id === payload.pair_id && s.rater_id === payload.rater_id,
    );
    if (dup) {
      throw new ConflictError('already rated');
    }
    this.submissions.push(payload);
  }

  async fetchSummary(): Promise<Summary> {
    return {
      n_ratings: this.submissions.length,
      naturalness_human: null,
      naturalness_model: null,
      clarity_human: null,
      clarity_model: null,
      preference_human_pct: 0,
      preference_model_pct: 0,
      preference_tie_pct: 0,
      rubric_pass_rates: { human_like: null, appropriate: null, complete: null },
    };
  }

  audioUrl(ref: string): string {
    return `/audio/${ref}`;
  }
}
