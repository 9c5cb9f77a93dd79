/** Typed client for the scenario service with stale-response protection:
 * at most one request per engine counts; older responses are discarded by
 * a monotonically increasing token. */

import { EngineKind, GraphInfo, ScenarioRequest, ScenarioResponse } from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
    constructor(
        readonly status: number,
        message: string,
        readonly field?: string,
    ) {
        super(message);
    }
}

export class ScenarioApi {
    constructor(
        private readonly base: string = '',
        private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
    ) {}

    private async getJson<T>(path: string): Promise<T> {
        const response = await this.fetchFn(`${this.base}${path}`);
        if (!response.ok) {
            throw new ApiError(response.status, `GET ${path} failed`);
        }
        return (await response.json()) as T;
    }

    health(): Promise<{ status: string; horizons: number[] }> {
        return this.getJson('/v1/health');
    }

    graphInfo(): Promise<GraphInfo> {
        return this.getJson('/v1/graph');
    }

    modelInfo(): Promise<Record<string, unknown>> {
        return this.getJson('/v1/model');
    }

    async run(request: ScenarioRequest): Promise<ScenarioResponse> {
        const response = await this.fetchFn(`${this.base}/v1/run`, {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify(request),
        });
        const body = await response.json();
        if (!response.ok) {
            throw new ApiError(response.status, body.error ?? 'request failed', body.field);
        }
        return body as ScenarioResponse;
    }
}

/** Serializes runs per engine; only the most recently issued request may
 * deliver its response. */
export class RequestGate {
    private tokens: Record<EngineKind, number> = { mechanistic: 0, surrogate: 0 };

    issue(engine: EngineKind): number {
        this.tokens[engine] += 1;
        return this.tokens[engine];
    }

    isCurrent(engine: EngineKind, token: number): boolean {
        return this.tokens[engine] === token;
    }

    /** Runs the request and resolves null when a newer one superseded it. */
    async guard<T>(engine: EngineKind, work: () => Promise<T>): Promise<T | null> {
        const token = this.issue(engine);
        const result = await work();
        return this.isCurrent(engine, token) ? result : null;
    }
}
