/** Cross-engine comparison: per-node percentage gap between the mechanistic
 * and surrogate responses, computed client-side from two /v1/run bodies. */

import { nodeSlice } from './series.js';
import { ScenarioResponse } from './types.js';

/** Relative gap per node (percent), mechanistic as the reference. Entries
 * where the reference is ~zero are null. */
export function perNodeGap(
    mechanistic: ScenarioResponse,
    surrogate: ScenarioResponse,
    day: number,
    state: number,
    ageFilter: number | null = null,
    floor = 1e-9,
): (number | null)[] {
    const reference = nodeSlice(mechanistic, day, state, ageFilter);
    const predicted = nodeSlice(surrogate, day, state, ageFilter);
    if (reference.length !== predicted.length) {
        throw new Error('engine responses disagree on node count');
    }
    return reference.map((value, node) =>
        Math.abs(value) > floor ? (100 * Math.abs(predicted[node] - value)) / Math.abs(value) : null,
    );
}

/** Mean absolute percentage gap across all days, nodes, ages, and states. */
export function overallGap(
    mechanistic: ScenarioResponse,
    surrogate: ScenarioResponse,
    floor = 1e-9,
): number {
    let sum = 0;
    let count = 0;
    mechanistic.values.forEach((dayTensor, day) => {
        dayTensor.forEach((node, nodeIdx) => {
            node.forEach((age, ageIdx) => {
                age.forEach((value, stateIdx) => {
                    if (Math.abs(value) > floor) {
                        const other = surrogate.values[day][nodeIdx][ageIdx][stateIdx];
                        sum += Math.abs(other - value) / Math.abs(value);
                        count += 1;
                    }
                });
            });
        });
    });
    return count === 0 ? 0 : (100 * sum) / count;
}
