/**
 * Zoomable/pannable mapping between image pixels and screen (canvas) pixels.
 *
 * screen = image * scale + offset.  The mapping must round-trip within one
 * device pixel under any zoom and pan, which plain affine float math gives
 * with room to spare.
 */

export interface Pt {
  x: number;
  y: number;
}

export class Viewport {
  scale = 1;
  offsetX = 0;
  offsetY = 0;

  toScreen(p: Pt): Pt {
    return { x: p.x * this.scale + this.offsetX, y: p.y * this.scale + this.offsetY };
  }

  toImage(p: Pt): Pt {
    return { x: (p.x - this.offsetX) / this.scale, y: (p.y - this.offsetY) / this.scale };
  }

  /** Scale a length (not a position) from image to screen units. */
  lengthToScreen(len: number): number {
    return len * this.scale;
  }

  /** Zoom by the factor while keeping the given screen point fixed. */
  zoomAt(screenPoint: Pt, factor: number): void {
    const anchor = this.toImage(screenPoint);
    this.scale *= factor;
    this.offsetX = screenPoint.x - anchor.x * this.scale;
    this.offsetY = screenPoint.y - anchor.y * this.scale;
  }

  panBy(dx: number, dy: number): void {
    this.offsetX += dx;
    this.offsetY += dy;
  }

  /** Fit the whole image into the canvas, centered, preserving aspect. */
  fitTo(imageW: number, imageH: number, canvasW: number, canvasH: number): void {
    this.scale = Math.min(canvasW / imageW, canvasH / imageH);
    this.offsetX = (canvasW - imageW * this.scale) / 2;
    this.offsetY = (canvasH - imageH * this.scale) / 2;
  }

  /** Pan so the given image point lands at the given screen point. */
  centerOn(imagePoint: Pt, screenPoint: Pt): void {
    this.offsetX = screenPoint.x - imagePoint.x * this.scale;
    this.offsetY = screenPoint.y - imagePoint.y * this.scale;
  }
}
