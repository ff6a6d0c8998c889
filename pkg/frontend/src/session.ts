/**
 * State machine for one loaded image pair.
 *
 * Click protocol: a click on either pane opens a pending half-click; the
 * matching click on the opposite pane posts the completed correspondence
 * (carrying the current revision) and refreshes the fit panel from the
 * response.  A second click on the same pane replaces the pending one, and
 * Escape cancels it.  There is never more than one pending half-click.
 *
 * All geometry shown (matrix, residuals, preview boxes) is taken verbatim
 * from service responses; a stale-revision rejection flips `conflict`, which
 * the UI surfaces as a reload prompt.
 */

import {
  ApiClient,
  FitResponse,
  MutationResponse,
  PairSummary,
  PointPair,
  PreviewBox,
  StaleRevisionError,
} from "./api.js";

export type Pane = "source" | "target";

export interface PendingClick {
  pane: Pane;
  x: number;
  y: number;
}

export interface FitPanel {
  fitted: boolean;
  matrix: number[][] | null;
  rmse: number | null;
  maxError: number | null;
  perPoint: number[] | null;
  reason: string | null;
}

export interface ResidualRow {
  index: number;
  residual: number;
}

const EMPTY_FIT: FitPanel = {
  fitted: false,
  matrix: null,
  rmse: null,
  maxError: null,
  perPoint: null,
  reason: null,
};

function toPanel(fit: FitResponse): FitPanel {
  return {
    fitted: fit.matrix !== null,
    matrix: fit.matrix,
    rmse: fit.rmse,
    maxError: fit.max_error,
    perPoint: fit.per_point,
    reason: fit.reason,
  };
}

export interface PaneBounds {
  width: number;
  height: number;
}

export class PairSession {
  pair: PairSummary | null = null;
  points: PointPair[] = [];
  revision = 0;
  fit: FitPanel = EMPTY_FIT;
  pending: PendingClick | null = null;
  conflict = false;
  previewVisible = false;
  previewBoxes: PreviewBox[] | null = null;
  listeners: Array<() => void> = [];
  private bounds: Record<Pane, PaneBounds | null> = { source: null, target: null };

  constructor(
    private readonly api: ApiClient,
    readonly pairId: string,
  ) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private changed(): void {
    for (const listener of this.listeners) listener();
  }

  async load(): Promise<void> {
    this.pair = await this.api.getPair(this.pairId);
    const points = await this.api.getPoints(this.pairId);
    const fit = await this.api.getHomography(this.pairId);
    this.points = points.points;
    this.revision = points.revision;
    this.fit = toPanel(fit);
    this.pending = null;
    this.conflict = false;
    this.previewVisible = false;
    this.previewBoxes = null;
    this.bounds.target = {
      width: this.pair.target_width,
      height: this.pair.target_height,
    };
    this.changed();
  }

  /** The app reports actual image dimensions once a pane's bitmap loads. */
  setPaneBounds(pane: Pane, width: number, height: number): void {
    this.bounds[pane] = { width, height };
  }

  /** Residuals with their point index, largest first. */
  residualRows(): ResidualRow[] {
    if (!this.fit.perPoint) return [];
    return this.fit.perPoint
      .map((residual, index) => ({ index, residual }))
      .sort((a, b) => b.residual - a.residual);
  }

  /**
   * Handle a click at image coordinates on one pane.  Returns true when the
   * click was consumed (in bounds), false when ignored.
   */
  async pickPoint(pane: Pane, x: number, y: number): Promise<boolean> {
    if (!this.pair || this.conflict) return false;
    const bounds = this.bounds[pane];
    if (x < 0 || y < 0) return false;
    if (bounds && (x > bounds.width || y > bounds.height)) return false;

    if (this.pending === null || this.pending.pane === pane) {
      this.pending = { pane, x, y };
      this.changed();
      return true;
    }

    const half = this.pending;
    const point: PointPair =
      half.pane === "source"
        ? { sx: half.x, sy: half.y, tx: x, ty: y }
        : { sx: x, sy: y, tx: half.x, ty: half.y };
    await this.mutate(() => this.api.addPoint(this.pairId, point, this.revision));
    return true;
  }

  cancelPending(): void {
    if (this.pending !== null) {
      this.pending = null;
      this.changed();
    }
  }

  async deletePoint(index: number): Promise<void> {
    await this.mutate(() => this.api.deletePoint(this.pairId, index, this.revision));
  }

  private async mutate(run: () => Promise<MutationResponse>): Promise<void> {
    try {
      const response = await run();
      this.points = response.points;
      this.revision = response.revision;
      this.fit = toPanel(response);
      this.pending = null;
      if (this.previewVisible) {
        await this.refreshPreview();
      }
    } catch (err) {
      if (err instanceof StaleRevisionError) {
        this.conflict = true;
      } else {
        throw err;
      }
    } finally {
      this.changed();
    }
  }

  async togglePreview(): Promise<void> {
    if (this.previewVisible) {
      this.previewVisible = false;
      this.previewBoxes = null;
    } else if (this.fit.fitted) {
      this.previewVisible = true;
      await this.refreshPreview();
    }
    this.changed();
  }

  private async refreshPreview(): Promise<void> {
    const preview = await this.api.getPreview(this.pairId);
    this.previewBoxes = preview.boxes;
    if (preview.boxes === null) {
      this.previewVisible = false;
    }
  }
}
