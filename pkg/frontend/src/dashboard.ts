import type { Summary } from './types.js';

export interface SummaryRow {
  label: string;
  value: string;
}

export interface SummaryTable {
  nRatings: number;
  perceptual: SummaryRow[];
  rubrics: SummaryRow[];
}

const RUBRIC_LABELS: Record<string, string> = {
  human_like: 'Human-like interaction',
  appropriate: 'Appropriateness (follows prompt)',
  complete: 'Completion (complete reply)',
};

function score(v: number | null): string {
  return v === null ? '—' : v.toFixed(2);
}

function pct(v: number): string {
  return `${v.toFixed(1)}%`;
}

/** Two-section table: perceptual scores and conversational rubric pass rates. */
export function buildSummaryTable(summary: Summary): SummaryTable {
  const perceptual: SummaryRow[] = [
    {
      label: 'Naturalness (Human / Model)',
      value: `${score(summary.naturalness_human)} / ${score(summary.naturalness_model)}`,
    },
    {
      label: 'Clarity (Human / Model)',
      value: `${score(summary.clarity_human)} / ${score(summary.clarity_model)}`,
    },
    {
      label: 'Preference (H. / M. / Tie)',
      value: `${pct(summary.preference_human_pct)} / ${pct(summary.preference_model_pct)} / ${pct(summary.preference_tie_pct)}`,
    },
  ];
  const rubrics: SummaryRow[] = Object.entries(RUBRIC_LABELS).map(([key, label]) => {
    const rate = summary.rubric_pass_rates[key];
    return {
      label,
      value: rate === null || rate === undefined ? '—' : pct(100 * rate),
    };
  });
  return { nRatings: summary.n_ratings, perceptual, rubrics };
}

export function renderSummaryHtml(summary: Summary): string {
  if (summary.n_ratings === 0) {
    return '<p class="empty" data-role="empty-summary">No ratings yet. / अभी तक कोई रेटिंग नहीं।</p>';
  }
  const table = buildSummaryTable(summary);
  const section = (title: string, rows: SummaryRow[]) =>
    `<tr class="section"><th colspan="2">${title}</th></tr>` +
    rows
      .map(
        (r) =>
          `<tr><td>${escapeHtml(r.label)}</td>` +
          `<td class="value">${escapeHtml(r.value)}</td></tr>`,
      )
      .join('');
  return (
    `<p data-role="n-ratings">${table.nRatings} rating(s)</p>` +
    '<table class="summary" data-role="summary-table">' +
    section('Perceptual Scores (5-point scale)', table.perceptual) +
    section('Conversational Rubrics (Pass Rate)', table.rubrics) +
    '</table>'
  );
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}
