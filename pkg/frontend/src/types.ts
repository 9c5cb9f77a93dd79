/** Shared request/response types mirroring the scenario service API. */

export type EngineKind = 'mechanistic' | 'surrogate';

export const HORIZONS = [30, 60, 90] as const;
export type Horizon = (typeof HORIZONS)[number];

export const MAX_CHANGE_POINTS = 3;
export const CHANGE_WINDOW_DAYS = 30;

export const N_AGE_GROUPS = 6;
export const N_STATES = 8;

export const AGE_LABELS = ['0-4', '5-14', '15-34', '35-59', '60-79', '80+'] as const;
export const STATE_LABELS = ['S', 'E', 'I_NS', 'I_Sy', 'I_Sev', 'I_Cr', 'R', 'D'] as const;

export interface ChangePoint {
    day: number;
    reduction: number;
}

export interface InitialCondition {
    kind: 'regime' | 'explicit';
    regime?: 'outbreak' | 'persistent_threat';
    seed: number;
    states?: number[][][];
}

export interface ScenarioRequest {
    engine: EngineKind;
    horizon: Horizon;
    initial: InitialCondition;
    change_points: ChangePoint[];
    graph_id?: string;
    include_input_days?: boolean;
}

/** values[day][node][age][state], horizon days after the five input days. */
export interface ScenarioResponse {
    schema_version: number;
    engine: EngineKind;
    graph_id: string;
    horizon: number;
    n_nodes: number;
    latency_ms: number;
    request: Record<string, unknown>;
    values: number[][][][];
    input_days?: number[][][][];
}

export interface GraphInfo {
    graph_id: string;
    n_nodes: number;
    density: number;
    total_population: number;
}

export interface ValidationIssue {
    field: string;
    message: string;
}
