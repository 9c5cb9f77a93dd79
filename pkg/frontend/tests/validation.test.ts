import { describe, expect, it } from 'vitest';

import { validateChangePoints, validateRequest } from '../src/validation.js';
import { ScenarioRequest } from '../src/types.js';

function baseRequest(): ScenarioRequest {
    return {
        engine: 'surrogate',
        horizon: 30,
        initial: { kind: 'regime', regime: 'persistent_threat', seed: 1 },
        change_points: [],
    };
}

describe('validateChangePoints', () => {
    it('accepts up to three well-formed points', () => {
        const points = [
            { day: 3, reduction: 0.1 },
            { day: 10, reduction: 0.5 },
            { day: 29, reduction: 0.99 },
        ];
        expect(validateChangePoints(points)).toEqual([]);
    });

    it('rejects a fourth change point', () => {
        const points = [1, 8, 15, 22].map((day) => ({ day, reduction: 0.2 }));
        const issues = validateChangePoints(points);
        expect(issues.some((i) => i.field === 'change_points')).toBe(true);
    });

    it('rejects days outside 1..30', () => {
        expect(validateChangePoints([{ day: 0, reduction: 0.2 }])[0].field).toBe(
            'change_points.0.day',
        );
        expect(validateChangePoints([{ day: 31, reduction: 0.2 }])).toHaveLength(1);
    });

    it('rejects reduction at or above one and below zero', () => {
        expect(validateChangePoints([{ day: 5, reduction: 1.0 }])).toHaveLength(1);
        expect(validateChangePoints([{ day: 5, reduction: -0.1 }])).toHaveLength(1);
        expect(validateChangePoints([{ day: 5, reduction: 0.0 }])).toHaveLength(0);
    });

    it('rejects non-increasing days', () => {
        const issues = validateChangePoints([
            { day: 10, reduction: 0.2 },
            { day: 10.5, reduction: 0.3 },
        ]);
        expect(issues.some((i) => i.message.includes('increase'))).toBe(true);
    });
});

describe('validateRequest', () => {
    it('accepts the default scenario', () => {
        expect(validateRequest(baseRequest())).toEqual([]);
    });

    it('rejects unknown horizons', () => {
        const request = { ...baseRequest(), horizon: 45 as 30 };
        expect(validateRequest(request)[0].field).toBe('horizon');
    });

    it('rejects unknown regimes', () => {
        const request = baseRequest();
        request.initial = { kind: 'regime', regime: 'weird' as 'outbreak', seed: 1 };
        expect(validateRequest(request).some((i) => i.field === 'initial.regime')).toBe(true);
    });

    it('mirrors every server-side 400 condition for generated edits', () => {
        // Any request the client deems valid satisfies the server's
        // documented constraints: <= 3 points, days in 1..30 strictly
        // increasing by >= 1, reduction in [0, 1), known horizon/regime.
        let checked = 0;
        let seed = 12345;
        const rand = () => {
            // xorshift: deterministic across runs
            seed ^= seed << 13;
            seed ^= seed >>> 17;
            seed ^= seed << 5;
            return (seed >>> 0) / 2 ** 32;
        };
        for (let trial = 0; trial < 500; trial++) {
            const count = Math.floor(rand() * 5);
            const points = Array.from({ length: count }, () => ({
                day: Math.floor(rand() * 34) - 1,
                reduction: rand() * 1.2 - 0.1,
            })).sort((a, b) => a.day - b.day);
            const request = { ...baseRequest(), change_points: points };
            if (validateRequest(request).length > 0) {
                continue;
            }
            checked += 1;
            expect(points.length).toBeLessThanOrEqual(3);
            points.forEach((point, i) => {
                expect(point.day).toBeGreaterThanOrEqual(1);
                expect(point.day).toBeLessThanOrEqual(30);
                expect(point.reduction).toBeGreaterThanOrEqual(0);
                expect(point.reduction).toBeLessThan(1);
                if (i > 0) {
                    expect(point.day - points[i - 1].day).toBeGreaterThanOrEqual(1);
                }
            });
        }
        expect(checked).toBeGreaterThan(50);
    });
});
