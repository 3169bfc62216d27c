import type { NextPairResponse, RatingPayload, Summary } from './types.js';

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

/** Duplicate (pair, rater) submission; the rating is already stored. */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(message, 409);
  }
}

/** Transport-level failure; the caller may retry with the same payload. */
export class NetworkError extends Error {}

export interface RatingApi {
  nextPair(raterId: string): Promise<NextPairResponse>;
  submitRating(payload: RatingPayload): Promise<void>;
  fetchSummary(): Promise<Summary>;
  audioUrl(ref: string): string;
}

export class HttpRatingApi implements RatingApi {
  constructor(private readonly baseUrl: string = '') {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new NetworkError(`request to ${path} failed: ${String(err)}`);
    }
    if (resp.status === 409) {
      throw new ConflictError(await safeDetail(resp));
    }
    if (!resp.ok) {
      throw new ApiError(await safeDetail(resp), resp.status);
    }
    return resp;
  }

  async nextPair(raterId: string): Promise<NextPairResponse> {
    const resp = await this.request(
      `/api/pairs/next?rater=${encodeURIComponent(raterId)}`,
    );
    return (await resp.json()) as NextPairResponse;
  }

  async submitRating(payload: RatingPayload): Promise<void> {
    await this.request('/api/ratings', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  async fetchSummary(): Promise<Summary> {
    const resp = await this.request('/api/summary');
    return (await resp.json()) as Summary;
  }

  audioUrl(ref: string): string {
    return `${this.baseUrl}/audio/${encodeURIComponent(ref)}`;
  }
}

async function safeDetail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    return typeof body.detail === 'string'
      ? body.detail
      : JSON.stringify(body.detail ?? body);
  } catch {
    return `HTTP ${resp.status}`;
  }
}
