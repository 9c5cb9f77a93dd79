/** Node heat view: the graph is synthetic (no geography), so nodes sit on a
 * near-square grid, colored by the selected compartment and day. */

export interface GridCell {
    node: number;
    row: number;
    col: number;
}

export function gridLayout(nodes: number): { cols: number; rows: number; cells: GridCell[] } {
    const cols = Math.max(1, Math.ceil(Math.sqrt(nodes)));
    const rows = Math.max(1, Math.ceil(nodes / cols));
    const cells: GridCell[] = [];
    for (let node = 0; node < nodes; node++) {
        cells.push({ node, row: Math.floor(node / cols), col: node % cols });
    }
    return { cols, rows, cells };
}

/** Yellow-to-red ramp; equal inputs always map to the same color. */
export function colorFor(value: number, low: number, high: number): string {
    if (!Number.isFinite(value)) {
        return '#888888';
    }
    const span = high - low;
    const t = span > 0 ? Math.min(1, Math.max(0, (value - low) / span)) : 0;
    const red = 255;
    const green = Math.round(235 - 195 * t);
    const blue = Math.round(120 - 110 * t);
    return `rgb(${red},${green},${blue})`;
}

export class GridHeat {
    readonly root: HTMLElement;
    onSelect: (node: number) => void = () => undefined;
    private canvas: HTMLCanvasElement;
    private nodes = 0;
    private selected = 0;

    constructor(private readonly size = 360) {
        this.root = document.createElement('div');
        this.root.className = 'heat';
        this.canvas = document.createElement('canvas');
        this.canvas.width = size;
        this.canvas.height = size;
        this.root.appendChild(this.canvas);
        this.canvas.addEventListener('click', (event) => {
            const { cols, rows } = gridLayout(this.nodes);
            const rect = this.canvas.getBoundingClientRect();
            const col = Math.floor(((event.clientX - rect.left) / rect.width) * cols);
            const row = Math.floor(((event.clientY - rect.top) / rect.height) * rows);
            const node = row * cols + col;
            if (node < this.nodes) {
                this.onSelect(node);
            }
        });
    }

    render(values: (number | null)[], selected: number): void {
        this.nodes = values.length;
        this.selected = selected;
        const { cols, rows, cells } = gridLayout(values.length);
        const ctx = this.canvas.getContext('2d');
        if (!ctx) {
            return;
        }
        const finite = values.filter((v): v is number => v !== null && Number.isFinite(v));
        const low = finite.length ? Math.min(...finite) : 0;
        const high = finite.length ? Math.max(...finite) : 1;
        const cellW = this.size / cols;
        const cellH = this.size / rows;
        ctx.clearRect(0, 0, this.size, this.size);
        for (const cell of cells) {
            const value = values[cell.node];
            ctx.fillStyle = value === null ? '#dddddd' : colorFor(value, low, high);
            ctx.fillRect(cell.col * cellW, cell.row * cellH, cellW - 1, cellH - 1);
            if (cell.node === this.selected) {
                ctx.strokeStyle = '#1040c0';
                ctx.lineWidth = 2;
                ctx.strokeRect(cell.col * cellW + 1, cell.row * cellH + 1, cellW - 3, cellH - 3);
            }
        }
    }
}
