import { ConflictError, NetworkError, type RatingApi } from './api.js';
import {
  isDone,
  type PairView,
  type Preference,
  type RatingPayload,
  type RubricKey,
  type Scale,
} from './types.js';

export type SessionPhase = 'loading' | 'rating' | 'done' | 'load-failed';

export interface Draft {
  naturalness_a: Scale | null;
  naturalness_b: Scale | null;
  clarity_a: Scale | null;
  clarity_b: Scale | null;
  preference: Preference | null;
  human_like: boolean;
  appropriate: boolean;
  complete: boolean;
}

function emptyDraft(): Draft {
  return {
    naturalness_a: null,
    naturalness_b: null,
    clarity_a: null,
    clarity_b: null,
    preference: null,
    human_like: false,
    appropriate: false,
    complete: false,
  };
}

export type ScaleField = 'naturalness_a' | 'naturalness_b' | 'clarity_a' | 'clarity_b';
const SCALE_FIELDS: readonly ScaleField[] = [
  'naturalness_a', 'naturalness_b', 'clarity_a', 'clarity_b',
];

/**
 * One rater's pass through the pair queue. The session is the single
 * source of truth for submit gating: both clips must have played to their
 * end at least once and every required control must be set. The service
 * owns all persistence; losing the page loses only the current draft.
 */
export class RaterSession {
  phase: SessionPhase = 'loading';
  pair: PairView | null = null;
  completed = 0;
  total = 0;
  playedA = false;
  playedB = false;
  draft: Draft = emptyDraft();
  /** Set after a submit that the rater may retry (network failure). */
  pendingRetry: RatingPayload | null = null;
  lastError: string | null = null;

  constructor(
    private readonly api: RatingApi,
    readonly raterId: string,
  ) {
    if (!raterId) {
      throw new Error('rater id must be non-empty');
    }
  }

  async loadNext(): Promise<void> {
    this.phase = 'loading';
    this.pair = null;
    this.playedA = false;
    this.playedB = false;
    this.draft = emptyDraft();
    this.pendingRetry = null;
    try {
      const next = await this.api.nextPair(this.raterId);
      if (isDone(next)) {
        this.completed = next.completed;
        this.phase = 'done';
      } else {
        this.pair = next;
        this.completed = next.completed;
        this.total = next.total;
        this.phase = 'rating';
      }
    } catch (err) {
      this.phase = 'load-failed';
      this.lastError = String(err instanceof Error ? err.message : err);
    }
  }

  markPlayed(position: 'A' | 'B'): void {
    if (position === 'A') {
      this.playedA = true;
    } else {
      this.playedB = true;
    }
  }

  setScale(field: ScaleField, value: number): void {
    if (!Number.isInteger(value) || value < 1 || value > 5) {
      throw new RangeError(`${field} must be an integer in [1, 5], got ${value}`);
    }
    this.draft[field] = value as Scale;
  }

  setPreference(value: Preference): void {
    this.draft.preference = value;
  }

  setRubric(key: RubricKey, value: boolean): void {
    this.draft[key] = value;
  }

  fieldsComplete(): boolean {
    return (
      SCALE_FIELDS.every((f) => this.draft[f] !== null) &&
      this.draft.preference !== null
    );
  }

  canSubmit(): boolean {
    return (
      this.phase === 'rating' &&
      this.pendingRetry === null &&
      this.playedA &&
      this.playedB &&
      this.fieldsComplete()
    );
  }

  buildPayload(): RatingPayload {
    if (this.pair === null || !this.canSubmit()) {
      throw new Error('submission is blocked until playback and all fields are complete');
    }
    return {
      pair_id: this.pair.pair_id,
      rater_id: this.raterId,
      naturalness_a: this.draft.naturalness_a as Scale,
      naturalness_b: this.draft.naturalness_b as Scale,
      clarity_a: this.draft.clarity_a as Scale,
      clarity_b: this.draft.clarity_b as Scale,
      preference: this.draft.preference as Preference,
      human_like: this.draft.human_like,
      appropriate: this.draft.appropriate,
      complete: this.draft.complete,
    };
  }

  async submit(): Promise<void> {
    await this.send(this.buildPayload());
  }

  /** Re-send the payload held back by a network failure. */
  async retry(): Promise<void> {
    if (this.pendingRetry === null) {
      throw new Error('nothing to retry');
    }
    await this.send(this.pendingRetry);
  }

  private async send(payload: RatingPayload): Promise<void> {
    try {
      await this.api.submitRating(payload);
      await this.loadNext();
      this.lastError = null;
    } catch (err) {
      if (err instanceof ConflictError) {
        // already stored for this (pair, rater): surface and move on
        await this.loadNext();
        this.lastError = 'This pair was already rated; advancing to the next one.';
      } else if (err instanceof NetworkError) {
        this.pendingRetry = payload;
        this.lastError = 'Could not reach the rating service. Your answers are kept; retry when back online.';
      } else {
        this.lastError = String(err instanceof Error ? err.message : err);
        throw err;
      }
    }
  }
}
