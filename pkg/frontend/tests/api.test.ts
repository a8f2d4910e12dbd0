import { describe, expect, it, vi } from 'vitest';

import { AnnotationApi, ApiError, type FetchLike } from '../src/api.js';

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

describe('AnnotationApi', () => {
  it('fetches the ordered condition list', async () => {
    const fetchImpl: FetchLike = vi.fn(async (url) => {
      expect(url).toBe('/conditions');
      return jsonResponse([
        { index: 1, name: 'endodontic treatment' },
        { index: 2, name: 'coronal destruction' },
      ]);
    });
    const api = new AnnotationApi('', fetchImpl);
    const conditions = await api.getConditions();
    expect(conditions.map((c) => c.index)).toEqual([1, 2]);
  });

  it('encodes the rater id in the task query', async () => {
    const fetchImpl: FetchLike = vi.fn(async (url) => {
      expect(url).toBe('/tasks/next?rater=expert%201');
      return jsonResponse({
        done: false,
        crop_id: 'IMG0001_36',
        image_url: '/crops/IMG0001_36.png',
        progress: { done: 0, total: 78 },
      });
    });
    const api = new AnnotationApi('', fetchImpl);
    const task = await api.getNextTask('expert 1');
    expect(task.done).toBe(false);
    if (!task.done) {
      expect(task.progress.total).toBe(78);
    }
  });

  it('posts the label vector and unwraps the stored record', async () => {
    const fetchImpl: FetchLike = vi.fn(async (url, init) => {
      expect(url).toBe('/annotations');
      expect(init?.method).toBe('POST');
      const body = JSON.parse(String(init?.body));
      expect(body).toEqual({
        rater: 'expert1',
        crop_id: 'IMG0001_36',
        labels: [1, 0, 0],
      });
      return jsonResponse({
        stored: {
          rater_id: 'expert1',
          group: 'expert',
          image_id: 'IMG0001',
          fdi: 36,
          labels: [1, 0, 0],
          crop_id: 'IMG0001_36',
          timestamp: 1,
        },
      });
    });
    const api = new AnnotationApi('', fetchImpl);
    const stored = await api.submitAnnotation('expert1', 'IMG0001_36', [1, 0, 0]);
    expect(stored.labels).toEqual([1, 0, 0]);
  });

  it('surfaces HTTP errors with the service detail', async () => {
    const fetchImpl: FetchLike = async () =>
      jsonResponse({ detail: 'unknown rater "ghost"' }, 404);
    const api = new AnnotationApi('', fetchImpl);
    await expect(api.getNextTask('ghost')).rejects.toThrowError(ApiError);
    await expect(api.getNextTask('ghost')).rejects.toThrowError(/unknown rater/);
  });

  it('prefixes a base URL everywhere', async () => {
    const seen: string[] = [];
    const fetchImpl: FetchLike = async (url) => {
      seen.push(url);
      return jsonResponse({ completion: {}, total_items: 0, complete_raters: [] });
    };
    const api = new AnnotationApi('http://localhost:8100', fetchImpl);
    await api.getAgreement();
    expect(seen).toEqual(['http://localhost:8100/agreement']);
    expect(api.imageUrl({ image_url: '/crops/x.png' })).toBe(
      'http://localhost:8100/crops/x.png',
    );
  });

  it('agreement panel data passes through untouched', async () => {
    const payload = {
      completion: { expert1: 78, expert2: 10 },
      total_items: 78,
      complete_raters: ['expert1'],
    };
    const api = new AnnotationApi('', async () => jsonResponse(payload));
    expect(await api.getAgreement()).toEqual(payload);
  });
});
