import type { RatingApi } from './api.js';
import { escapeHtml, renderSummaryHtml } from './dashboard.js';
import type { RaterSession, ScaleField } from './session.js';
import { RUBRIC_KEYS, SCALE_VALUES, type Preference } from './types.js';

const SCALE_LABELS: Record<ScaleField, string> = {
  naturalness_a: 'Naturalness A / स्वाभाविकता A',
  naturalness_b: 'Naturalness B / स्वाभाविकता B',
  clarity_a: 'Clarity A / स्पष्टता A',
  clarity_b: 'Clarity B / स्पष्टता B',
};

const RUBRIC_LABELS: Record<(typeof RUBRIC_KEYS)[number], string> = {
  human_like: 'Human-like interaction / मानव जैसी बातचीत',
  appropriate: 'Appropriate (follows prompt) / प्रसंग के अनुरूप',
  complete: 'Complete reply / पूर्ण उत्तर',
};

/**
 * DOM shell around a RaterSession. The pair screen is built once per pair
 * (re-rendering would reset audio playback); only the gate state and the
 * notice banner refresh on input. Clip origins never reach the client, so
 * nothing here can leak them.
 */
export class RatingApp {
  constructor(
    private readonly root: HTMLElement,
    private readonly api: RatingApi,
    private readonly session: RaterSession,
  ) {}

  async start(): Promise<void> {
    await this.session.loadNext();
    this.render();
  }

  render(): void {
    const s = this.session;
    if (s.phase === 'loading') {
      this.root.innerHTML = '<p data-role="loading">Loading… / लोड हो रहा है…</p>';
    } else if (s.phase === 'done') {
      this.root.innerHTML =
        '<section data-role="done-screen"><h2>All pairs rated — thank you! / सभी जोड़े पूरे — धन्यवाद!</h2>' +
        `<p data-role="done-count">Completed ratings: ${s.completed}</p></section>`;
    } else if (s.phase === 'load-failed') {
      this.root.innerHTML =
        `<p class="error" data-role="load-error">${escapeHtml(s.lastError ?? 'load failed')}</p>` +
        '<button data-role="reload">Retry loading / फिर कोशिश करें</button>';
      this.query('reload').addEventListener('click', () => void this.start());
    } else {
      this.renderPair();
    }
  }

  private renderPair(): void {
    const s = this.session;
    const pair = s.pair;
    if (!pair) {
      return;
    }
    const scaleGroup = (field: ScaleField) =>
      `<fieldset data-role="${field}"><legend>${SCALE_LABELS[field]}</legend>` +
      SCALE_VALUES.map(
        (v) =>
          `<label><input type="radio" name="${field}" value="${v}">${v}</label>`,
      ).join('') +
      '</fieldset>';
    const prefOptions: Preference[] = ['A', 'B', 'TIE'];
    this.root.innerHTML = `
      <section data-role="pair-screen">
        <p data-role="progress">Pair ${s.completed + 1} of ${s.total} · rater ${escapeHtml(s.raterId)}</p>
        <div class="clips">
          <div><h3>Clip A</h3>
            <audio data-role="audio-a" controls src="${this.api.audioUrl(pair.audio_a)}"></audio>
            <span data-role="played-a" hidden>heard ✓</span></div>
          <div><h3>Clip B</h3>
            <audio data-role="audio-b" controls src="${this.api.audioUrl(pair.audio_b)}"></audio>
            <span data-role="played-b" hidden>heard ✓</span></div>
        </div>
        ${scaleGroup('naturalness_a')}${scaleGroup('naturalness_b')}
        ${scaleGroup('clarity_a')}${scaleGroup('clarity_b')}
        <fieldset data-role="preference"><legend>Which felt better? / कौन बेहतर लगा?</legend>
          ${prefOptions
            .map(
              (p) =>
                `<label><input type="radio" name="preference" value="${p}">${p === 'TIE' ? 'Tie / बराबर' : p}</label>`,
            )
            .join('')}
        </fieldset>
        <fieldset data-role="rubrics"><legend>Conversation quality / संवाद गुणवत्ता</legend>
          ${RUBRIC_KEYS.map(
            (k) =>
              `<label><input type="checkbox" name="${k}">${RUBRIC_LABELS[k]}</label>`,
          ).join('')}
        </fieldset>
        <p class="notice" data-role="notice" hidden></p>
        <button data-role="submit" disabled>Submit rating / रेटिंग भेजें</button>
        <button data-role="retry" hidden>Retry submission / फिर भेजें</button>
      </section>`;

    this.audio('a').addEventListener('ended', () => {
      s.markPlayed('A');
      this.query('played-a').hidden = false;
      this.updateGate();
    });
    this.audio('b').addEventListener('ended', () => {
      s.markPlayed('B');
      this.query('played-b').hidden = false;
      this.updateGate();
    });
    for (const field of Object.keys(SCALE_LABELS) as ScaleField[]) {
      for (const input of this.inputs(field)) {
        input.addEventListener('change', () => {
          s.setScale(field, Number(input.value));
          this.updateGate();
        });
      }
    }
    for (const input of this.inputs('preference')) {
      input.addEventListener('change', () => {
        s.setPreference(input.value as Preference);
        this.updateGate();
      });
    }
    for (const input of this.inputs('rubrics')) {
      input.addEventListener('change', () => {
        s.setRubric(input.name as (typeof RUBRIC_KEYS)[number], input.checked);
      });
    }
    this.query('submit').addEventListener('click', () => void this.handleSubmit());
    this.query('retry').addEventListener('click', () => void this.handleRetry());
    this.updateGate();
  }

  private async handleSubmit(): Promise<void> {
    if (!this.session.canSubmit()) {
      return;
    }
    await this.session.submit();
    this.afterSend();
  }

  private async handleRetry(): Promise<void> {
    await this.session.retry();
    this.afterSend();
  }

  private afterSend(): void {
    if (this.session.pendingRetry !== null) {
      // network failure: keep the screen and the draft, offer retry
      const notice = this.query('notice');
      notice.textContent = this.session.lastError;
      notice.hidden = false;
      this.query('retry').hidden = false;
      (this.query('submit') as HTMLButtonElement).disabled = true;
      return;
    }
    this.render();
    if (this.session.lastError) {
      const banner = document.createElement('p');
      banner.className = 'notice';
      banner.dataset.role = 'notice';
      banner.textContent = this.session.lastError;
      this.root.prepend(banner);
    }
  }

  private updateGate(): void {
    (this.query('submit') as HTMLButtonElement).disabled = !this.session.canSubmit();
  }

  query(role: string): HTMLElement {
    const el = this.root.querySelector<HTMLElement>(`[data-role="${role}"]`);
    if (!el) {
      throw new Error(`missing element ${role}`);
    }
    return el;
  }

  audio(position: 'a' | 'b'): HTMLAudioElement {
    return this.query(`audio-${position}`) as HTMLAudioElement;
  }

  private inputs(role: string): HTMLInputElement[] {
    return Array.from(this.query(role).querySelectorAll('input'));
  }
}

/** Read-only dashboard view over GET /api/summary. */
export class SummaryView {
  constructor(
    private readonly root: HTMLElement,
    private readonly api: RatingApi,
  ) {}

  async refresh(): Promise<void> {
    const summary = await this.api.fetchSummary();
    this.root.innerHTML = renderSummaryHtml(summary);
  }
}
