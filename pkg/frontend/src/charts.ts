/** SVG line chart of one node/compartment over time, with an optional
 * mechanistic overlay and a marker for the scrubbed day. */

const SVG_NS = 'http://www.w3.org/2000/svg';

export function polylinePoints(
    series: number[],
    width: number,
    height: number,
    yMax: number,
): string {
    if (series.length === 0) {
        return '';
    }
    const dx = series.length > 1 ? width / (series.length - 1) : 0;
    return series
        .map((value, i) => {
            const y = yMax > 0 ? height - (value / yMax) * height : height;
            return `${(i * dx).toFixed(2)},${y.toFixed(2)}`;
        })
        .join(' ');
}

export class LineChart {
    readonly root: SVGSVGElement;
    private surrogateLine: SVGPolylineElement;
    private mechanisticLine: SVGPolylineElement;
    private dayMarker: SVGLineElement;

    constructor(
        private readonly width = 520,
        private readonly height = 220,
    ) {
        this.root = document.createElementNS(SVG_NS, 'svg');
        this.root.setAttribute('viewBox', `0 0 ${width} ${height}`);
        this.root.classList.add('chart');
        this.mechanisticLine = document.createElementNS(SVG_NS, 'polyline');
        this.mechanisticLine.setAttribute('class', 'line mechanistic');
        this.surrogateLine = document.createElementNS(SVG_NS, 'polyline');
        this.surrogateLine.setAttribute('class', 'line surrogate');
        this.dayMarker = document.createElementNS(SVG_NS, 'line');
        this.dayMarker.setAttribute('class', 'day-marker');
        this.root.append(this.mechanisticLine, this.surrogateLine, this.dayMarker);
    }

    render(surrogate: number[], mechanistic: number[] | null, day: number): void {
        const yMax = Math.max(1e-12, ...surrogate, ...(mechanistic ?? []));
        this.surrogateLine.setAttribute(
            'points',
            polylinePoints(surrogate, this.width, this.height, yMax),
        );
        this.mechanisticLine.setAttribute(
            'points',
            mechanistic ? polylinePoints(mechanistic, this.width, this.height, yMax) : '',
        );
        const days = Math.max(surrogate.length, mechanistic?.length ?? 0);
        const x = days > 1 ? (day / (days - 1)) * this.width : 0;
        this.dayMarker.setAttribute('x1', x.toFixed(2));
        this.dayMarker.setAttribute('x2', x.toFixed(2));
        this.dayMarker.setAttribute('y1', '0');
        this.dayMarker.setAttribute('y2', String(this.height));
    }
}
