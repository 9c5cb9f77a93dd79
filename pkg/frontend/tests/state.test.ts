import { describe, expect, it } from 'vitest';

import { ScenarioStore } from '../src/state.js';
import { makeResponse } from './fixtures.js';

describe('ScenarioStore edits', () => {
    it('auto-run fires once per committed edit', () => {
        const store = new ScenarioStore();
        let commits = 0;
        store.onCommit(() => commits++);
        store.addChangePoint();
        expect(commits).toBe(1);
        store.commitChangePoint(0, { reduction: 0.6 });
        expect(commits).toBe(2);
        store.setRegime('outbreak');
        expect(commits).toBe(3);
    });

    it('slider preview does not trigger the auto-run', () => {
        const store = new ScenarioStore();
        let commits = 0;
        store.onCommit(() => commits++);
        store.addChangePoint();
        commits = 0;
        store.previewChangePoint(0, { reduction: 0.9 });
        store.previewChangePoint(0, { reduction: 0.8 });
        expect(commits).toBe(0);
        store.commitChangePoint(0, { reduction: 0.8 });
        expect(commits).toBe(1);
    });

    it('fourth change point is refused without any commit', () => {
        const store = new ScenarioStore();
        let commits = 0;
        store.onCommit(() => commits++);
        expect(store.addChangePoint()).toBe(true);
        expect(store.addChangePoint()).toBe(true);
        expect(store.addChangePoint()).toBe(true);
        expect(store.addChangePoint()).toBe(false);
        expect(store.snapshot().changePoints).toHaveLength(3);
        expect(commits).toBe(3);
    });

    it('keeps change points sorted by day after commits', () => {
        const store = new ScenarioStore();
        store.addChangePoint();
        store.addChangePoint();
        store.commitChangePoint(1, { day: 2 });
        const days = store.snapshot().changePoints.map((p) => p.day);
        expect(days).toEqual([...days].sort((a, b) => a - b));
    });

    it('scenario edits invalidate stored responses', () => {
        const store = new ScenarioStore();
        store.storeResponse('surrogate', makeResponse({ horizon: 30 }));
        expect(store.response('surrogate')).toBeDefined();
        store.setSeed(7);
        expect(store.response('surrogate')).toBeUndefined();
    });

    it('requests mirror the store fields', () => {
        const store = new ScenarioStore();
        store.setRegime('outbreak');
        store.setSeed(42);
        store.setHorizon(60);
        store.addChangePoint();
        const request = store.request('mechanistic');
        expect(request.engine).toBe('mechanistic');
        expect(request.horizon).toBe(60);
        expect(request.initial).toEqual({ kind: 'regime', regime: 'outbreak', seed: 42 });
        expect(request.change_points).toHaveLength(1);
    });

    it('view state is pure: identical snapshots for identical inputs', () => {
        const store = new ScenarioStore();
        store.storeResponse('surrogate', makeResponse({ horizon: 4 }));
        store.selectNode(2);
        store.setDay(3);
        const a = store.snapshot();
        const b = store.snapshot();
        expect(a).toEqual(b);
    });

    it('day is clamped to the response window', () => {
        const store = new ScenarioStore();
        store.storeResponse('surrogate', makeResponse({ horizon: 4 }));
        store.setDay(99);
        // 5 input days + 30 horizon (store default) - 1
        expect(store.snapshot().view.day).toBe(34);
        store.setDay(-3);
        expect(store.snapshot().view.day).toBe(0);
    });
});
