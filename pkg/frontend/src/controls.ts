/** Scenario controls: regime/seed/horizon pickers, the change-point editor
 * (day and reduction sliders, add/remove), and the day scrubber. */

import { ScenarioStore } from './state.js';
import { AGE_LABELS, HORIZONS, Horizon, STATE_LABELS } from './types.js';

function option(value: string, label: string): string {
    return `<option value="${value}">${label}</option>`;
}

export class ScenarioControls {
    readonly root: HTMLElement;
    onRunMechanistic: () => void = () => undefined;
    private pointsEl: HTMLElement;
    private addButton: HTMLButtonElement;
    private issuesEl: HTMLElement;

    constructor(private readonly store: ScenarioStore) {
        this.root = document.createElement('div');
        this.root.className = 'controls';
        this.root.innerHTML = `
            <div class="row">
                <label>regime <select data-role="regime">
                    ${option('persistent_threat', 'persistent threat')}
                    ${option('outbreak', 'outbreak')}
                </select></label>
                <label>seed <input data-role="seed" type="number" value="1" step="1"></label>
                <label>horizon <select data-role="horizon">
                    ${HORIZONS.map((h) => option(String(h), `${h} days`)).join('')}
                </select></label>
                <button data-role="run-mechanistic">run mechanistic</button>
            </div>
            <div data-role="points" class="points"></div>
            <div class="row">
                <button data-role="add">+ change point</button>
                <span data-role="issues" class="issues"></span>
            </div>
            <div class="row">
                <label>compartment <select data-role="state">
                    ${STATE_LABELS.map((s, i) => option(String(i), s)).join('')}
                </select></label>
                <label>age <select data-role="age">
                    ${option('all', 'all ages')}
                    ${AGE_LABELS.map((a, i) => option(String(i), a)).join('')}
                </select></label>
                <label class="grow">day <input data-role="day" type="range" min="0" max="34" value="0">
                    <b data-role="day-label">0</b></label>
                <label><input data-role="overlay" type="checkbox"> overlay engines</label>
            </div>`;

        this.pointsEl = this.root.querySelector('[data-role="points"]')!;
        this.addButton = this.root.querySelector('[data-role="add"]')!;
        this.issuesEl = this.root.querySelector('[data-role="issues"]')!;

        const regime = this.root.querySelector('[data-role="regime"]') as HTMLSelectElement;
        regime.onchange = () => store.setRegime(regime.value as 'outbreak' | 'persistent_threat');
        const seed = this.root.querySelector('[data-role="seed"]') as HTMLInputElement;
        seed.onchange = () => store.setSeed(Number(seed.value));
        const horizon = this.root.querySelector('[data-role="horizon"]') as HTMLSelectElement;
        horizon.onchange = () => store.setHorizon(Number(horizon.value) as Horizon);
        this.addButton.onclick = () => {
            store.addChangePoint();
            this.sync();
        };
        const stateSel = this.root.querySelector('[data-role="state"]') as HTMLSelectElement;
        stateSel.value = '3';
        stateSel.onchange = () => store.selectState(Number(stateSel.value));
        const ageSel = this.root.querySelector('[data-role="age"]') as HTMLSelectElement;
        ageSel.onchange = () => store.setAgeFilter(ageSel.value === 'all' ? null : Number(ageSel.value));
        const day = this.root.querySelector('[data-role="day"]') as HTMLInputElement;
        day.oninput = () => {
            store.setDay(Number(day.value));
            this.dayLabel.textContent = day.value;
        };
        const overlay = this.root.querySelector('[data-role="overlay"]') as HTMLInputElement;
        overlay.onchange = () => store.setOverlay(overlay.checked);
        const runButton = this.root.querySelector('[data-role="run-mechanistic"]') as HTMLButtonElement;
        runButton.onclick = () => this.onRunMechanistic();
        this.sync();
    }

    private get dayLabel(): HTMLElement {
        return this.root.querySelector('[data-role="day-label"]')!;
    }

    /** Rebuild the change-point rows and the validation banner. */
    sync(): void {
        const snapshot = this.store.snapshot();
        this.pointsEl.innerHTML = '';
        snapshot.changePoints.forEach((point, index) => {
            const row = document.createElement('div');
            row.className = 'point-row';
            row.innerHTML = `
                <span>#${index + 1}</span>
                <label>day <input data-role="day" type="range" min="1" max="30" step="1"
                    value="${point.day}"> <b>${point.day}</b></label>
                <label>reduction <input data-role="reduction" type="range" min="0" max="0.99"
                    step="0.01" value="${point.reduction}"> <b>${Math.round(point.reduction * 100)}%</b></label>
                <button data-role="remove">remove</button>`;
            const dayInput = row.querySelector('[data-role="day"]') as HTMLInputElement;
            dayInput.oninput = () => {
                this.store.previewChangePoint(index, { day: Number(dayInput.value) });
                (dayInput.nextElementSibling as HTMLElement).textContent = dayInput.value;
            };
            dayInput.onchange = () => {
                this.store.commitChangePoint(index, { day: Number(dayInput.value) });
                this.sync();
            };
            const reduction = row.querySelector('[data-role="reduction"]') as HTMLInputElement;
            reduction.oninput = () => {
                this.store.previewChangePoint(index, { reduction: Number(reduction.value) });
                (reduction.nextElementSibling as HTMLElement).textContent =
                    `${Math.round(Number(reduction.value) * 100)}%`;
            };
            reduction.onchange = () => {
                this.store.commitChangePoint(index, { reduction: Number(reduction.value) });
                this.sync();
            };
            (row.querySelector('[data-role="remove"]') as HTMLButtonElement).onclick = () => {
                this.store.removeChangePoint(index);
                this.sync();
            };
            this.pointsEl.appendChild(row);
        });
        this.addButton.disabled = snapshot.changePoints.length >= 3;
        const issues = snapshot.issues;
        this.issuesEl.textContent = issues.map((i) => `${i.field}: ${i.message}`).join('; ');
    }

    setDayBounds(maxDay: number, day: number): void {
        const slider = this.root.querySelector('[data-role="day"]') as HTMLInputElement;
        slider.max = String(maxDay);
        slider.value = String(day);
        this.dayLabel.textContent = String(day);
    }
}
