/** Hand-built response tensors small enough to reason about in tests. */

import { EngineKind, ScenarioResponse } from '../src/types.js';

export function makeResponse(options: {
    engine?: EngineKind;
    horizon?: number;
    nodes?: number;
    fill?: (day: number, node: number, age: number, state: number) => number;
    inputFill?: (day: number, node: number, age: number, state: number) => number;
    latency?: number;
}): ScenarioResponse {
    const engine = options.engine ?? 'surrogate';
    const horizon = options.horizon ?? 4;
    const nodes = options.nodes ?? 3;
    const fill = options.fill ?? (() => 1.0);
    const inputFill = options.inputFill ?? fill;
    const tensor = (days: number, f: typeof fill) =>
        Array.from({ length: days }, (_, day) =>
            Array.from({ length: nodes }, (_, node) =>
                Array.from({ length: 6 }, (_, age) =>
                    Array.from({ length: 8 }, (_, state) => f(day, node, age, state)),
                ),
            ),
        );
    return {
        schema_version: 1,
        engine,
        graph_id: 'test',
        horizon,
        n_nodes: nodes,
        latency_ms: options.latency ?? 5.0,
        request: {},
        values: tensor(horizon, fill),
        input_days: tensor(5, inputFill),
    };
}
