/**
 * Checklist state for the current task.
 *
 * Rules enforced here (and validated again server-side): "none" is
 * mutually exclusive with any checked condition, and a submission needs
 * either "none" or at least one condition. The checklist order always
 * mirrors the /conditions index order; nothing is fabricated client-side.
 */

import type { Condition } from './api.js';

export type ChecklistState = {
  conditions: Condition[];
  checked: boolean[];
  none: boolean;
};

export function freshChecklist(conditions: Condition[]): ChecklistState {
  return {
    conditions,
    checked: conditions.map(() => false),
    none: false,
  };
}

/** Toggle one condition by its 1-based index; unchecks "none". */
export function toggleCondition(state: ChecklistState, index: number): ChecklistState {
  const position = index - 1;
  if (position < 0 || position >= state.checked.length) {
    return state;
  }
  const checked = state.checked.slice();
  checked[position] = !checked[position];
  return { ...state, checked, none: false };
}

/** Toggle "none"; checking it clears every condition. */
export function toggleNone(state: ChecklistState): ChecklistState {
  if (state.none) {
    return { ...state, none: false };
  }
  return { ...state, checked: state.checked.map(() => false), none: true };
}

export function canSubmit(state: ChecklistState): boolean {
  return state.none || state.checked.some(Boolean);
}

/** The bit vector posted to the service; all-zero means "none". */
export function labelVector(state: ChecklistState): number[] {
  if (state.none) {
    return state.checked.map(() => 0);
  }
  return state.checked.map((bit) => (bit ? 1 : 0));
}

export function invariantHolds(state: ChecklistState): boolean {
  return !(state.none && state.checked.some(Boolean));
}
