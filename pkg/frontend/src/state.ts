/** UI scenario state: request fields plus view state, with commit semantics.
 *
 * Committed edits (slider release, add/remove, regime change) auto-run the
 * surrogate; the mechanistic engine only runs on an explicit request. The
 * store holds no DOM references so every transition is unit-testable.
 */

import { ChangePoint, EngineKind, Horizon, ScenarioRequest, ScenarioResponse, ValidationIssue } from './types.js';
import { validateChangePoints, validateRequest } from './validation.js';

export interface ViewState {
    selectedNode: number;
    selectedState: number; // compartment index
    ageFilter: number | null; // null = sum over age groups
    day: number; // 0 = first input day
    overlay: boolean; // show mechanistic overlay when available
}

export interface StoreSnapshot {
    regime: 'outbreak' | 'persistent_threat';
    seed: number;
    horizon: Horizon;
    changePoints: ChangePoint[];
    view: ViewState;
    issues: ValidationIssue[];
    responses: Partial<Record<EngineKind, ScenarioResponse>>;
}

export type CommitListener = (snapshot: StoreSnapshot) => void;

export class ScenarioStore {
    private regime: 'outbreak' | 'persistent_threat' = 'persistent_threat';
    private seed = 1;
    private horizon: Horizon = 30;
    private changePoints: ChangePoint[] = [];
    private view: ViewState = {
        selectedNode: 0,
        selectedState: 3, // symptomatic
        ageFilter: null,
        day: 0,
        overlay: false,
    };
    private responses: Partial<Record<EngineKind, ScenarioResponse>> = {};
    private commitListeners: CommitListener[] = [];
    private viewListeners: CommitListener[] = [];

    onCommit(listener: CommitListener): void {
        this.commitListeners.push(listener);
    }

    onViewChange(listener: CommitListener): void {
        this.viewListeners.push(listener);
    }

    snapshot(): StoreSnapshot {
        return {
            regime: this.regime,
            seed: this.seed,
            horizon: this.horizon,
            changePoints: this.changePoints.map((p) => ({ ...p })),
            view: { ...this.view },
            issues: this.issues(),
            responses: { ...this.responses },
        };
    }

    issues(): ValidationIssue[] {
        return validateChangePoints(this.changePoints);
    }

    request(engine: EngineKind): ScenarioRequest {
        return {
            engine,
            horizon: this.horizon,
            initial: { kind: 'regime', regime: this.regime, seed: this.seed },
            change_points: this.changePoints.map((p) => ({ ...p })),
            include_input_days: true,
        };
    }

    /** True when the current scenario would pass server-side validation. */
    isRunnable(): boolean {
        return validateRequest(this.request('surrogate')).length === 0;
    }

    private commit(): void {
        // Scenario-changing edits invalidate both engines' responses.
        this.responses = {};
        const snapshot = this.snapshot();
        for (const listener of this.commitListeners) {
            listener(snapshot);
        }
    }

    private viewChanged(): void {
        const snapshot = this.snapshot();
        for (const listener of this.viewListeners) {
            listener(snapshot);
        }
    }

    setRegime(regime: 'outbreak' | 'persistent_threat'): void {
        this.regime = regime;
        this.commit();
    }

    setSeed(seed: number): void {
        this.seed = Math.trunc(seed);
        this.commit();
    }

    setHorizon(horizon: Horizon): void {
        this.horizon = horizon;
        this.view.day = Math.min(this.view.day, this.maxDay());
        this.commit();
    }

    /** Returns false (and commits nothing) when the slot budget is spent. */
    addChangePoint(): boolean {
        if (this.changePoints.length >= 3) {
            return false;
        }
        const day = this.nextFreeDay();
        if (day === null) {
            return false;
        }
        this.changePoints.push({ day, reduction: 0.3 });
        this.changePoints.sort((a, b) => a.day - b.day);
        this.commit();
        return true;
    }

    private nextFreeDay(): number | null {
        const used = new Set(this.changePoints.map((p) => p.day));
        for (let day = 10; day <= 30; day++) {
            if (![...used].some((u) => Math.abs(u - day) < 1)) {
                return day;
            }
        }
        return null;
    }

    removeChangePoint(index: number): void {
        this.changePoints.splice(index, 1);
        this.commit();
    }

    /** Transient slider motion: update without re-running engines. */
    previewChangePoint(index: number, patch: Partial<ChangePoint>): void {
        Object.assign(this.changePoints[index], patch);
        this.viewChanged();
    }

    /** Slider release: sort by day and, when valid, trigger the auto-run. */
    commitChangePoint(index: number, patch: Partial<ChangePoint>): void {
        Object.assign(this.changePoints[index], patch);
        this.changePoints.sort((a, b) => a.day - b.day);
        this.commit();
    }

    storeResponse(engine: EngineKind, response: ScenarioResponse): void {
        this.responses[engine] = response;
        this.view.day = Math.min(this.view.day, this.maxDay());
        this.viewChanged();
    }

    response(engine: EngineKind): ScenarioResponse | undefined {
        return this.responses[engine];
    }

    maxDay(): number {
        const inputDays = this.responses.surrogate?.input_days?.length ?? 5;
        return inputDays + this.horizon - 1;
    }

    selectNode(node: number): void {
        this.view.selectedNode = node;
        this.viewChanged();
    }

    selectState(state: number): void {
        this.view.selectedState = state;
        this.viewChanged();
    }

    setAgeFilter(age: number | null): void {
        this.view.ageFilter = age;
        this.viewChanged();
    }

    setDay(day: number): void {
        this.view.day = Math.max(0, Math.min(day, this.maxDay()));
        this.viewChanged();
    }

    setOverlay(overlay: boolean): void {
        this.view.overlay = overlay;
        this.viewChanged();
    }
}
