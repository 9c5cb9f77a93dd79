import { describe, expect, it } from 'vitest';

import { ApiError, RequestGate, ScenarioApi } from '../src/api.js';
import { ScenarioRequest } from '../src/types.js';

function jsonResponse(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { 'content-type': 'application/json' },
    });
}

const request: ScenarioRequest = {
    engine: 'surrogate',
    horizon: 30,
    initial: { kind: 'regime', regime: 'outbreak', seed: 0 },
    change_points: [],
};

describe('ScenarioApi', () => {
    it('posts run requests and returns the body', async () => {
        let seenUrl = '';
        let seenBody = '';
        const api = new ScenarioApi('http://svc', async (url, init) => {
            seenUrl = url;
            seenBody = String(init?.body);
            return jsonResponse({ engine: 'surrogate', values: [] });
        });
        const response = await api.run(request);
        expect(seenUrl).toBe('http://svc/v1/run');
        expect(JSON.parse(seenBody).horizon).toBe(30);
        expect(response.engine).toBe('surrogate');
    });

    it('surfaces the server error message and field path', async () => {
        const api = new ScenarioApi('', async () =>
            jsonResponse({ error: 'too many change points', field: 'change_points' }, 400),
        );
        await expect(api.run(request)).rejects.toMatchObject({
            status: 400,
            message: 'too many change points',
            field: 'change_points',
        });
        const error = await api.run(request).catch((e) => e);
        expect(error).toBeInstanceOf(ApiError);
    });
});

describe('RequestGate', () => {
    it('discards responses from superseded requests', async () => {
        const gate = new RequestGate();
        let releaseFirst: (value: string) => void = () => undefined;
        const first = gate.guard('surrogate', () => new Promise<string>((resolve) => {
            releaseFirst = resolve;
        }));
        const second = gate.guard('surrogate', async () => 'second');
        expect(await second).toBe('second');
        releaseFirst('first');
        expect(await first).toBeNull(); // stale: a newer token exists
    });

    it('tracks engines independently', async () => {
        const gate = new RequestGate();
        const surrogate = gate.guard('surrogate', async () => 'a');
        const mechanistic = gate.guard('mechanistic', async () => 'b');
        expect(await surrogate).toBe('a');
        expect(await mechanistic).toBe('b');
    });
});
