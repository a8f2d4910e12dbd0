import { describe, expect, it } from 'vitest';

import type { Condition } from '../src/api.js';
import {
  canSubmit,
  freshChecklist,
  invariantHolds,
  labelVector,
  toggleCondition,
  toggleNone,
} from '../src/state.js';

const conditions: Condition[] = Array.from({ length: 13 }, (_, i) => ({
  index: i + 1,
  name: `condition ${i + 1}`,
}));

describe('freshChecklist', () => {
  it('starts empty and unsubmittable', () => {
    const state = freshChecklist(conditions);
    expect(state.checked).toHaveLength(13);
    expect(state.checked.every((bit) => !bit)).toBe(true);
    expect(state.none).toBe(false);
    expect(canSubmit(state)).toBe(false);
  });

  it('keeps the /conditions order', () => {
    const state = freshChecklist(conditions);
    expect(state.conditions.map((c) => c.index)).toEqual(
      conditions.map((c) => c.index),
    );
  });
});

describe('toggleCondition', () => {
  it('checks and unchecks by 1-based index', () => {
    let state = freshChecklist(conditions);
    state = toggleCondition(state, 5);
    expect(state.checked[4]).toBe(true);
    expect(canSubmit(state)).toBe(true);
    state = toggleCondition(state, 5);
    expect(state.checked[4]).toBe(false);
  });

  it('ignores out-of-range indices', () => {
    const state = freshChecklist(conditions);
    expect(toggleCondition(state, 0)).toBe(state);
    expect(toggleCondition(state, 14)).toBe(state);
  });

  it('unchecks none when a condition is picked', () => {
    let state = toggleNone(freshChecklist(conditions));
    expect(state.none).toBe(true);
    state = toggleCondition(state, 1);
    expect(state.none).toBe(false);
    expect(state.checked[0]).toBe(true);
  });
});

describe('toggleNone', () => {
  it('clears every checked condition (mutual exclusion)', () => {
    let state = freshChecklist(conditions);
    state = toggleCondition(state, 1);
    state = toggleCondition(state, 13);
    state = toggleNone(state);
    expect(state.none).toBe(true);
    expect(state.checked.every((bit) => !bit)).toBe(true);
    expect(invariantHolds(state)).toBe(true);
  });

  it('none alone is submittable as an all-zero vector', () => {
    const state = toggleNone(freshChecklist(conditions));
    expect(canSubmit(state)).toBe(true);
    expect(labelVector(state)).toEqual(new Array(13).fill(0));
  });

  it('toggles back off', () => {
    let state = toggleNone(freshChecklist(conditions));
    state = toggleNone(state);
    expect(state.none).toBe(false);
    expect(canSubmit(state)).toBe(false);
  });
});

describe('labelVector', () => {
  it('sets exactly the checked bits', () => {
    let state = freshChecklist(conditions);
    state = toggleCondition(state, 1);
    state = toggleCondition(state, 5);
    const vector = labelVector(state);
    expect(vector).toHaveLength(13);
    expect(vector[0]).toBe(1);
    expect(vector[4]).toBe(1);
    expect(vector.reduce((a, b) => a + b, 0)).toBe(2);
  });

  it('invariant holds across random action sequences', () => {
    let state = freshChecklist(conditions);
    const actions = [1, 7, -1, 13, 0, 3, 7, 99, 2];
    for (const step of actions) {
      state = step <= 0 ? toggleNone(state) : toggleCondition(state, step);
      expect(invariantHolds(state)).toBe(true);
      expect(labelVector(state)).toHaveLength(13);
    }
  });
});
