/** Client-side request validation, mirroring the server's 400 conditions.
 * Anything rejected here never reaches the network. */

import {
    CHANGE_WINDOW_DAYS,
    HORIZONS,
    MAX_CHANGE_POINTS,
    ScenarioRequest,
    ValidationIssue,
} from './types.js';

export function validateChangePoints(points: { day: number; reduction: number }[]): ValidationIssue[] {
    const issues: ValidationIssue[] = [];
    if (points.length > MAX_CHANGE_POINTS) {
        issues.push({
            field: 'change_points',
            message: `at most ${MAX_CHANGE_POINTS} change points`,
        });
    }
    points.forEach((point, i) => {
        if (!(point.day >= 1 && point.day <= CHANGE_WINDOW_DAYS)) {
            issues.push({
                field: `change_points.${i}.day`,
                message: `day must lie in 1..${CHANGE_WINDOW_DAYS}`,
            });
        }
        if (!(point.reduction >= 0 && point.reduction < 1)) {
            issues.push({
                field: `change_points.${i}.reduction`,
                message: 'reduction must lie in [0, 1)',
            });
        }
    });
    const days = points.map((p) => p.day);
    for (let i = 1; i < days.length; i++) {
        if (days[i] - days[i - 1] < 1) {
            issues.push({
                field: `change_points.${i}.day`,
                message: 'change days must increase by at least one day',
            });
        }
    }
    return issues;
}

export function validateRequest(request: ScenarioRequest): ValidationIssue[] {
    const issues: ValidationIssue[] = [];
    if (!(HORIZONS as readonly number[]).includes(request.horizon)) {
        issues.push({ field: 'horizon', message: `horizon must be one of ${HORIZONS.join(', ')}` });
    }
    if (request.engine !== 'mechanistic' && request.engine !== 'surrogate') {
        issues.push({ field: 'engine', message: 'unknown engine' });
    }
    if (request.initial.kind === 'regime') {
        const regime = request.initial.regime;
        if (regime !== 'outbreak' && regime !== 'persistent_threat') {
            issues.push({ field: 'initial.regime', message: 'unknown regime' });
        }
        if (!Number.isInteger(request.initial.seed)) {
            issues.push({ field: 'initial.seed', message: 'seed must be an integer' });
        }
    }
    return issues.concat(validateChangePoints(request.change_points));
}
