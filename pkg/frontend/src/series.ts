/** Pure selectors turning response tensors into displayable slices.
 * Day index 0 is the first input day, so the scrubber's origin shows the
 * initial conditions; prediction days follow the five input days. */

import { ScenarioResponse } from './types.js';

function dayTensor(response: ScenarioResponse, day: number): number[][][] {
    const inputDays = response.input_days ?? [];
    if (day < inputDays.length) {
        return inputDays[day];
    }
    const offset = day - inputDays.length;
    if (offset >= response.values.length) {
        throw new RangeError(`day ${day} outside the response window`);
    }
    return response.values[offset];
}

export function totalDays(response: ScenarioResponse): number {
    return (response.input_days?.length ?? 0) + response.values.length;
}

/** Per-node values for one day and compartment, age-filtered or age-summed. */
export function nodeSlice(
    response: ScenarioResponse,
    day: number,
    state: number,
    ageFilter: number | null = null,
): number[] {
    const tensor = dayTensor(response, day);
    return tensor.map((node) => {
        if (ageFilter !== null) {
            return node[ageFilter][state];
        }
        let sum = 0;
        for (const age of node) {
            sum += age[state];
        }
        return sum;
    });
}

/** One node's day series for a compartment, over input and predicted days. */
export function daySeries(
    response: ScenarioResponse,
    node: number,
    state: number,
    ageFilter: number | null = null,
): number[] {
    const days = totalDays(response);
    const series: number[] = [];
    for (let day = 0; day < days; day++) {
        const tensor = dayTensor(response, day)[node];
        if (ageFilter !== null) {
            series.push(tensor[ageFilter][state]);
        } else {
            series.push(tensor.reduce((sum, age) => sum + age[state], 0));
        }
    }
    return series;
}
