/** Application wiring: store, API client, heat view, chart, latency panel.
 * Committed edits auto-run the surrogate; the mechanistic engine runs on an
 * explicit click and enables the per-node gap overlay. */

import { RequestGate, ScenarioApi } from './api.js';
import { LineChart } from './charts.js';
import { ScenarioControls } from './controls.js';
import { perNodeGap } from './gap.js';
import { GridHeat } from './heat.js';
import { LatencyPanel } from './latency.js';
import { daySeries, nodeSlice, totalDays } from './series.js';
import { ScenarioStore, StoreSnapshot } from './state.js';
import { EngineKind } from './types.js';

export function bootstrap(root: HTMLElement, apiBase = ''): void {
    const api = new ScenarioApi(apiBase);
    const gate = new RequestGate();
    const store = new ScenarioStore();
    const controls = new ScenarioControls(store);
    const heat = new GridHeat();
    const chart = new LineChart();
    const latency = new LatencyPanel();
    const status = document.createElement('div');
    status.className = 'status';

    const heatTitle = document.createElement('h3');
    const chartTitle = document.createElement('h3');
    root.append(controls.root, status, latency.root, heatTitle, heat.root, chartTitle, chart.root);

    heat.onSelect = (node) => store.selectNode(node);

    async function run(engine: EngineKind): Promise<void> {
        if (!store.isRunnable()) {
            status.textContent = 'scenario invalid; fix the highlighted fields';
            return;
        }
        status.textContent = `${engine} running…`;
        try {
            const response = await gate.guard(engine, () => api.run(store.request(engine)));
            if (response === null) {
                return; // superseded by a newer request
            }
            store.storeResponse(engine, response);
            status.textContent = '';
        } catch (error) {
            status.textContent = `${engine} failed: ${(error as Error).message}`;
        }
    }

    store.onCommit(() => {
        controls.sync();
        void run('surrogate');
    });
    controls.onRunMechanistic = () => void run('mechanistic');
    store.onViewChange((snapshot) => render(snapshot));

    function render(snapshot: StoreSnapshot): void {
        const surrogate = snapshot.responses.surrogate;
        const mechanistic = snapshot.responses.mechanistic;
        latency.update(surrogate?.latency_ms, mechanistic?.latency_ms);
        const view = snapshot.view;
        if (!surrogate) {
            return;
        }
        controls.setDayBounds(totalDays(surrogate) - 1, view.day);
        if (view.overlay && mechanistic) {
            heatTitle.textContent = 'per-node gap: |surrogate − mechanistic| / mechanistic';
            heat.render(
                perNodeGap(mechanistic, surrogate, view.day, view.selectedState, view.ageFilter),
                view.selectedNode,
            );
        } else {
            heatTitle.textContent = 'per-node values (surrogate)';
            heat.render(
                nodeSlice(surrogate, view.day, view.selectedState, view.ageFilter),
                view.selectedNode,
            );
        }
        chartTitle.textContent = `node ${view.selectedNode} over time`;
        chart.render(
            daySeries(surrogate, view.selectedNode, view.selectedState, view.ageFilter),
            mechanistic
                ? daySeries(mechanistic, view.selectedNode, view.selectedState, view.ageFilter)
                : null,
            view.day,
        );
    }

    void run('surrogate');
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
    const params = new URLSearchParams(window.location.search);
    bootstrap(document.getElementById('app')!, params.get('api') ?? '');
}
