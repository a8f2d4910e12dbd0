/**
 * DOM wiring for the rater interface.
 *
 * All displayed numbers come straight from the service; reloading the page
 * reproduces the same view from the same API calls. Submissions advance
 * optimistically and roll back to the same task on failure.
 */

import { AnnotationApi, ApiError, type Agreement, type Condition, type NextTask } from './api.js';
import { actionForKey, shortcutLabel } from './keys.js';
import {
  canSubmit,
  freshChecklist,
  labelVector,
  toggleCondition,
  toggleNone,
  type ChecklistState,
} from './state.js';

type El = HTMLElement;

function byId(id: string): El {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing #${id}`);
  return element;
}

export class App {
  private api: AnnotationApi;
  private rater = '';
  private conditions: Condition[] = [];
  private checklist: ChecklistState | null = null;
  private task: NextTask | null = null;
  private submitting = false;
  private agreementVisible = false;

  constructor(api?: AnnotationApi) {
    this.api = api ?? new AnnotationApi();
  }

  start(): void {
    const params = new URLSearchParams(window.location.search);
    const fromUrl = params.get('rater');
    byId('login-form').addEventListener('submit', (event) => {
      event.preventDefault();
      const input = byId('rater-input') as HTMLInputElement;
      if (input.value.trim()) void this.begin(input.value.trim());
    });
    document.addEventListener('keydown', (event) => this.onKey(event));
    byId('submit-button').addEventListener('click', () => void this.submit());
    byId('none-checkbox').addEventListener('change', () => this.onToggleNone());
    byId('agreement-toggle').addEventListener('click', () => void this.toggleAgreement());
    byId('retry-button').addEventListener('click', () => void this.loadNext());
    if (fromUrl) void this.begin(fromUrl);
  }

  private async begin(rater: string): Promise<void> {
    this.rater = rater;
    try {
      this.conditions = await this.api.getConditions();
    } catch (error) {
      this.showError(`cannot load conditions: ${String(error)}`);
      return;
    }
    byId('login-screen').hidden = true;
    byId('task-screen').hidden = false;
    byId('rater-name').textContent = rater;
    this.renderChecklistSkeleton();
    await this.loadNext();
  }

  private renderChecklistSkeleton(): void {
    const list = byId('checklist');
    list.innerHTML = '';
    for (const condition of this.conditions) {
      const row = document.createElement('label');
      row.className = 'condition-row';
      row.dataset.index = String(condition.index);
      const box = document.createElement('input');
      box.type = 'checkbox';
      box.addEventListener('change', () => this.onToggleCondition(condition.index));
      const text = document.createElement('span');
      text.textContent = `${condition.index}. ${condition.name}`;
      const hint = document.createElement('kbd');
      hint.textContent = shortcutLabel(condition.index);
      row.append(box, text, hint);
      list.append(row);
    }
  }

  private async loadNext(): Promise<void> {
    this.hideError();
    let task: NextTask;
    try {
      task = await this.api.getNextTask(this.rater);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.showError(`unknown rater "${this.rater}"`, false);
        byId('task-screen').hidden = true;
        byId('login-screen').hidden = false;
      } else {
        this.showError(`network failure: ${String(error)}`, true);
      }
      return;
    }
    this.task = task;
    if (task.done) {
      byId('task-body').hidden = true;
      const complete = byId('completion');
      complete.hidden = false;
      byId('completion-count').textContent = `${task.count}/${task.count}`;
      return;
    }
    this.checklist = freshChecklist(this.conditions);
    (byId('crop-image') as HTMLImageElement).src = this.api.imageUrl(task);
    byId('progress').textContent = `${task.progress.done}/${task.progress.total}`;
    byId('crop-name').textContent = task.crop_id;
    byId('task-body').hidden = false;
    byId('completion').hidden = true;
    this.renderChecklist();
  }

  private renderChecklist(): void {
    if (!this.checklist) return;
    const rows = byId('checklist').querySelectorAll<HTMLElement>('.condition-row');
    rows.forEach((row, position) => {
      const box = row.querySelector('input');
      if (box) box.checked = this.checklist!.checked[position];
      row.classList.toggle('checked', this.checklist!.checked[position]);
    });
    const none = byId('none-checkbox') as HTMLInputElement;
    none.checked = this.checklist.none;
    (byId('submit-button') as HTMLButtonElement).disabled =
      !canSubmit(this.checklist) || this.submitting;
    byId('validation-message').hidden = canSubmit(this.checklist);
  }

  private onToggleCondition(index: number): void {
    if (!this.checklist) return;
    this.checklist = toggleCondition(this.checklist, index);
    this.renderChecklist();
  }

  private onToggleNone(): void {
    if (!this.checklist) return;
    this.checklist = toggleNone(this.checklist);
    this.renderChecklist();
  }

  private onKey(event: KeyboardEvent): void {
    if (event.target instanceof HTMLInputElement && event.target.type === 'text') {
      return;
    }
    const action = actionForKey(event.key, event.shiftKey, this.conditions.length);
    if (!action) return;
    event.preventDefault();
    if (action.kind === 'toggle') this.onToggleCondition(action.index);
    else if (action.kind === 'none') this.onToggleNone();
    else if (action.kind === 'submit') void this.submit();
    else void this.toggleAgreement();
  }

  private async submit(): Promise<void> {
    if (!this.checklist || !this.task || this.task.done || this.submitting) return;
    if (!canSubmit(this.checklist)) {
      byId('validation-message').hidden = false;
      return;
    }
    this.submitting = true;
    this.renderChecklist();
    const cropId = this.task.crop_id;
    try {
      await this.api.submitAnnotation(this.rater, cropId, labelVector(this.checklist));
      await this.loadNext();
    } catch (error) {
      // rollback: same task, same checklist, visible banner
      this.showError(`submission failed, nothing lost: ${String(error)}`, true);
    } finally {
      this.submitting = false;
      this.renderChecklist();
    }
  }

  private async toggleAgreement(): Promise<void> {
    const panel = byId('agreement-panel');
    if (this.agreementVisible) {
      panel.hidden = true;
      this.agreementVisible = false;
      return;
    }
    let agreement: Agreement;
    try {
      agreement = await this.api.getAgreement();
    } catch (error) {
      this.showError(`cannot load agreement: ${String(error)}`, true);
      return;
    }
    this.renderAgreement(agreement);
    this.agreementVisible = true;
  }

  private renderAgreement(agreement: Agreement): void {
    const panel = byId('agreement-panel');
    const table = byId('agreement-table');
    table.innerHTML = '';
    const completion = byId('agreement-completion');
    completion.textContent = Object.entries(agreement.completion)
      .map(([who, count]) => `${who}: ${count}/${agreement.total_items}`)
      .join('  ·  ');
    if (!agreement.kappa) {
      // fewer than two complete raters: counts only, panel stays hidden
      panel.hidden = true;
      this.agreementVisible = false;
      return;
    }
    for (const row of agreement.kappa) {
      const tr = document.createElement('tr');
      const name = document.createElement('td');
      name.textContent = `${row.condition_index}. ${row.name}`;
      const value = document.createElement('td');
      if (row.degenerate) {
        value.innerHTML = '<span class="badge">n/a</span>';
      } else {
        value.textContent = row.kappa === null ? '' : row.kappa.toFixed(3);
      }
      tr.append(name, value);
      table.append(tr);
    }
    panel.hidden = false;
  }

  private showError(message: string, retryable = false): void {
    const banner = byId('error-banner');
    banner.hidden = false;
    byId('error-message').textContent = message;
    byId('retry-button').hidden = !retryable;
  }

  private hideError(): void {
    byId('error-banner').hidden = true;
  }
}
