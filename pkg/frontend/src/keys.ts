/**
 * Keyboard shortcuts: raters label dozens of crops, so everything is
 * reachable without the mouse.
 *
 *   1-9        toggle conditions 1-9
 *   0          toggle condition 10
 *   Shift+1..  toggle conditions 11+ ( ! -> 11, @ -> 12, # -> 13, ... )
 *   n          toggle "none"
 *   Enter      submit
 *   a          toggle the agreement panel
 */

export type KeyAction =
  | { kind: 'toggle'; index: number }
  | { kind: 'none' }
  | { kind: 'submit' }
  | { kind: 'agreement' };

const SHIFTED_DIGITS = ')!@#$%^&*(';

/** Map a key event to an action, or null when the key is not a shortcut. */
export function actionForKey(
  key: string,
  shiftKey: boolean,
  conditionCount: number,
): KeyAction | null {
  if (key === 'Enter') {
    return { kind: 'submit' };
  }
  if (key === 'n' || key === 'N') {
    return { kind: 'none' };
  }
  if (key === 'a' || key === 'A') {
    return { kind: 'agreement' };
  }
  let index: number | null = null;
  if (!shiftKey && key >= '0' && key <= '9') {
    index = key === '0' ? 10 : Number(key);
  } else if (shiftKey) {
    const digit = SHIFTED_DIGITS.indexOf(key);
    if (digit > 0) {
      index = 10 + digit;
    }
  }
  if (index !== null && index >= 1 && index <= conditionCount) {
    return { kind: 'toggle', index };
  }
  return null;
}

/** Hint text shown next to a condition row. */
export function shortcutLabel(index: number): string {
  if (index <= 9) return String(index);
  if (index === 10) return '0';
  const offset = index - 10;
  if (offset < SHIFTED_DIGITS.length) {
    return `shift+${offset}`;
  }
  return '';
}
