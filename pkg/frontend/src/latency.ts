/** Engine timing display fed by the server-reported latency fields. */

export function formatMs(ms: number | undefined): string {
    return ms === undefined ? '—' : `${ms.toFixed(1)} ms`;
}

/** Speed-up ratio with one decimal; dash when either side is missing. */
export function formatSpeedup(mechanisticMs?: number, surrogateMs?: number): string {
    if (mechanisticMs === undefined || surrogateMs === undefined || surrogateMs <= 0) {
        return '—';
    }
    return `${(mechanisticMs / surrogateMs).toFixed(1)}x`;
}

export class LatencyPanel {
    readonly root: HTMLElement;
    private surrogateEl: HTMLElement;
    private mechanisticEl: HTMLElement;
    private speedupEl: HTMLElement;

    constructor() {
        this.root = document.createElement('div');
        this.root.className = 'latency';
        this.root.innerHTML = `
            <span>surrogate <b data-role="surrogate">—</b></span>
            <span>mechanistic <b data-role="mechanistic">—</b></span>
            <span>speed-up <b data-role="speedup">—</b></span>`;
        this.surrogateEl = this.root.querySelector('[data-role="surrogate"]')!;
        this.mechanisticEl = this.root.querySelector('[data-role="mechanistic"]')!;
        this.speedupEl = this.root.querySelector('[data-role="speedup"]')!;
    }

    update(surrogateMs?: number, mechanisticMs?: number): void {
        this.surrogateEl.textContent = formatMs(surrogateMs);
        this.mechanisticEl.textContent = formatMs(mechanisticMs);
        this.speedupEl.textContent = formatSpeedup(mechanisticMs, surrogateMs);
    }
}
