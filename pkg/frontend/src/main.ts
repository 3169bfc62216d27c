import { HttpRatingApi } from './api.js';
import { RaterSession } from './session.js';
import { RatingApp, SummaryView } from './ui.js';

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing #${id}`);
  }
  return el as T;
}

const api = new HttpRatingApi('');
const rateRoot = byId<HTMLElement>('rate-view');
const summaryRoot = byId<HTMLElement>('summary-view');
const summaryView = new SummaryView(summaryRoot, api);

byId<HTMLFormElement>('rater-form').addEventListener('submit', (event) => {
  event.preventDefault();
  const raterId = byId<HTMLInputElement>('rater-id').value.trim();
  if (!raterId) {
    return;
  }
  byId('rater-entry').hidden = true;
  const app = new RatingApp(rateRoot, api, new RaterSession(api, raterId));
  void app.start();
});

byId('tab-rate').addEventListener('click', () => {
  rateRoot.hidden = false;
  byId('rater-entry').hidden = rateRoot.innerHTML !== '';
  summaryRoot.hidden = true;
});

byId('tab-summary').addEventListener('click', () => {
  rateRoot.hidden = true;
  byId('rater-entry').hidden = true;
  summaryRoot.hidden = false;
  void summaryView.refresh();
});
