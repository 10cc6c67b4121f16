// World (meters, y north) to canvas (pixels, y down) mapping with pan
// and zoom. The transform must stay exactly invertible: picking a world
// anchor for an instruction goes through toWorld on the click point.

export interface Point {
  x: number;
  y: number;
}

const MIN_SCALE = 0.05;
const MAX_SCALE = 400;

export class Viewport {
  scale: number; // pixels per meter
  centerX: number; // world point shown at the canvas center
  centerY: number;

  constructor(
    public width: number,
    public height: number,
    scale = 4,
    centerX = 0,
    centerY = 0,
  ) {
    this.scale = scale;
    this.centerX = centerX;
    this.centerY = centerY;
  }

  toScreen(p: Point): Point {
    return {
      x: (p.x - this.centerX) * this.scale + this.width / 2,
      y: (this.centerY - p.y) * this.scale + this.height / 2,
    };
  }

  toWorld(s: Point): Point {
    return {
      x: (s.x - this.width / 2) / this.scale + this.centerX,
      y: this.centerY - (s.y - this.height / 2) / this.scale,
    };
  }

  panByScreen(dx: number, dy: number): void {
    this.centerX -= dx / this.scale;
    this.centerY += dy / this.scale;
  }

  // Zoom about a screen point: the world point under the cursor stays put.
  zoomAt(anchor: Point, factor: number): void {
    const fixed = this.toWorld(anchor);
    this.scale = Math.min(MAX_SCALE, Math.max(MIN_SCALE, this.scale * factor));
    const now = this.toScreen(fixed);
    this.panByScreen(anchor.x - now.x, anchor.y - now.y);
  }

  fitBounds(minX: number, minY: number, maxX: number, maxY: number, padPx = 30): void {
    const spanX = Math.max(1e-6, maxX - minX);
    const spanY = Math.max(1e-6, maxY - minY);
    const sx = (this.width - 2 * padPx) / spanX;
    const sy = (this.height - 2 * padPx) / spanY;
    this.scale = Math.min(MAX_SCALE, Math.max(MIN_SCALE, Math.min(sx, sy)));
    this.centerX = (minX + maxX) / 2;
    this.centerY = (minY + maxY) / 2;
  }
}
