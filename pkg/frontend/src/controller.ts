/**
 * Editor controller: the glue between the API client, view state, and the
 * renderer. All displayed geometry comes from server snapshots (identified by
 * snapshot hash); the client never computes deformation locally.
 *
 * Command discipline:
 *   - slider drags coalesce into pending values; release commits exactly one
 *     deform command per gesture,
 *   - at most one deform request is in flight; a newer commit issued while
 *     one is pending replaces any queued commit (depth-1 queue).
 */

import { ApiClient } from './api.js';
import { decodeF32, decodeI32 } from './codec.js';
import {
  HistoryEntry,
  SLIDER_BINDINGS,
  ViewState,
  initialViewState,
  sliderValuesToParams,
} from './state.js';
import {
  BranchInfo,
  Primitive,
  RIB_PRIMITIVES,
  RibInfo,
  SimFrame,
  Snapshot,
} from './types.js';

export interface DecodedPart {
  partId: number;
  positions: Float32Array;
  faces: Int32Array | null;
}

export interface DecodedGeometry {
  snapshotHash: string;
  parts: DecodedPart[];
  ribs: { ribId: number; closed: boolean; partId: number; points: Float32Array }[];
  spine: { keyPoints: Float32Array; branches: number[][]; junctions: number[] };
}

export interface ControllerHooks {
  onGeometry?: (geo: DecodedGeometry, positionsOnly: boolean) => void;
  onSpineOverlay?: (keyPositions: Float32Array) => void;
  onSelection?: (state: ViewState) => void;
  onHighlight?: (partWeights: Float32Array[] | null) => void;
  onStatus?: (message: string) => void;
}

export function decodeSnapshot(snap: Snapshot): DecodedGeometry {
  return {
    snapshotHash: snap.snapshot_hash,
    parts: snap.parts.map((p) => ({
      partId: p.part_id,
      positions: decodeF32(p.positions),
      faces: p.faces ? decodeI32(p.faces) : null,
    })),
    ribs: snap.ribs.map((r) => ({
      ribId: r.rib_id, closed: r.closed, partId: r.part_id,
      points: decodeF32(r.points),
    })),
    spine: {
      keyPoints: decodeF32(snap.spine.key_points),
      branches: snap.spine.branches,
      junctions: snap.spine.junctions,
    },
  };
}

export class EditorController {
  readonly state: ViewState = initialViewState();
  sessionId: string | null = null;
  ribs: RibInfo[] = [];
  branches: BranchInfo[] = [];

  private pendingSlider: Record<string, number> | null = null;
  private inFlight = false;
  private queued: { primitive: Primitive; params: Record<string, unknown> } | null = null;
  private hadFaces = false;
  private simCursor = 0;

  constructor(private api: ApiClient, private hooks: ControllerHooks = {}) {}

  // -- session -------------------------------------------------------------

  async connect(rig: string): Promise<void> {
    const info = await this.api.createSession(rig);
    this.sessionId = info.session_id;
    this.state.restHash = info.rest_hash;
    this.ribs = await this.api.listRibs(this.sessionId);
    this.branches = await this.api.listBranches(this.sessionId);
    await this.refreshSnapshot();
    this.hooks.onStatus?.(
      `session ${info.session_id}: ${info.n_ribs} ribs, ${info.n_branches} branches`);
  }

  private requireSession(): string {
    if (!this.sessionId) throw new Error('not connected');
    return this.sessionId;
  }

  async refreshSnapshot(): Promise<DecodedGeometry> {
    const snap = await this.api.snapshot(this.requireSession(), this.state.namedView);
    return this.applySnapshot(snap);
  }

  private applySnapshot(snap: Snapshot): DecodedGeometry {
    const geo = decodeSnapshot(snap);
    const positionsOnly = this.hadFaces && geo.parts.every((p) => p.faces === null);
    this.hadFaces = this.hadFaces || geo.parts.some((p) => p.faces !== null);
    this.state.snapshotHash = geo.snapshotHash;
    this.hooks.onGeometry?.(geo, positionsOnly);
    return geo;
  }

  // -- selection (server is the source of truth) ----------------------------

  async selectRibs(ribIds: number[]): Promise<void> {
    const r = await this.api.command(this.requireSession(), 'select_ribs', { ribs: ribIds });
    this.state.selectedRibs = (r.result as { selected_ribs: number[] }).selected_ribs;
    this.hooks.onSelection?.(this.state);
  }

  async selectBranch(branch: number): Promise<void> {
    const r = await this.api.command(this.requireSession(), 'select_spine_branch', { branch });
    this.state.selectedBranch = (r.result as { selected_branch: number }).selected_branch;
    this.hooks.onSelection?.(this.state);
  }

  async setPart(partId: number): Promise<void> {
    await this.api.command(this.requireSession(), 'set_part', { part_id: partId });
    this.ribs = await this.api.listRibs(this.requireSession());
    this.hooks.onSelection?.(this.state);
  }

  // -- hover highlight -------------------------------------------------------

  async hoverRib(ribId: number | null): Promise<void> {
    if (ribId === null) {
      this.hooks.onHighlight?.(null);
      return;
    }
    const col = await this.api.weightColumn(this.requireSession(), 'rib', ribId);
    this.hooks.onHighlight?.(col.parts.map((p) => decodeF32(p.weights)));
  }

  // -- sliders: coalesce while dragging, commit exactly once on release ------

  setActivePrimitive(primitive: Primitive): void {
    this.state.activePrimitive = primitive;
    this.pendingSlider = null;
  }

  sliderInput(values: Record<string, number>): void {
    this.pendingSlider = { ...(this.pendingSlider ?? {}), ...values };
  }

  async sliderRelease(): Promise<void> {
    if (!this.pendingSlider) return;
    const primitive = this.state.activePrimitive;
    const bindings = SLIDER_BINDINGS[primitive];
    const values: Record<string, number> = {};
    for (const b of bindings) values[b.key] = this.pendingSlider[b.key] ?? b.initial;
    this.pendingSlider = null;
    await this.commitDeform(primitive, sliderValuesToParams(primitive, values));
  }

  /** Depth-1 queue: a commit issued while one is in flight replaces any queued one. */
  async commitDeform(primitive: Primitive, params: Record<string, unknown>): Promise<void> {
    if (this.inFlight) {
      this.queued = { primitive, params };
      return;
    }
    this.inFlight = true;
    try {
      const body: Record<string, unknown> = { primitive, params, response: 'full' };
      if (RIB_PRIMITIVES.includes(primitive as never)) {
        body.ribs = this.state.selectedRibs;
      } else {
        body.branch = this.state.selectedBranch;
      }
      const r = await this.api.command(this.requireSession(), 'deform', body);
      const result = r.result as { snapshot_hash: string; snapshot?: Snapshot };
      if (result.snapshot) {
        this.applySnapshot(result.snapshot);
      } else {
        this.state.snapshotHash = result.snapshot_hash;
        await this.refreshSnapshot();
      }
      this.state.history.push({
        label: primitive,
        snapshotHash: result.snapshot_hash,
        command: { primitive, params },
      } as HistoryEntry);
    } finally {
      this.inFlight = false;
    }
    if (this.queued) {
      const next = this.queued;
      this.queued = null;
      await this.commitDeform(next.primitive, next.params);
    }
  }

  async reset(): Promise<string> {
    const r = await this.api.command(this.requireSession(), 'reset');
    const hash = (r.result as { snapshot_hash: string }).snapshot_hash;
    this.state.history.push({ label: 'reset', snapshotHash: hash, command: { reset: true } });
    await this.refreshSnapshot();
    return hash;
  }

  /** True when the displayed state is bitwise the rig's rest pose. */
  atRest(): boolean {
    return this.state.snapshotHash !== null && this.state.snapshotHash === this.state.restHash;
  }

  captureKeyframe(time: number): void {
    if (!this.state.snapshotHash) throw new Error('nothing to capture');
    this.state.keyframes.push({ time, snapshotHash: this.state.snapshotHash });
    this.state.keyframes.sort((a, b) => a.time - b.time);
  }

  // -- simulation view --------------------------------------------------------

  async startSim(config: Record<string, unknown>, schedule: Record<string, unknown>,
                 maxFrames?: number): Promise<void> {
    this.simCursor = 0;
    await this.api.simStart(this.requireSession(), config, schedule, maxFrames);
  }

  /** Poll new frames; the spine overlay tracks the reduced state live. */
  async pollSimFrames(): Promise<SimFrame[]> {
    const frames = await this.api.simFrames(this.requireSession(), this.simCursor);
    this.simCursor += frames.length;
    const last = frames[frames.length - 1];
    if (last) {
      this.hooks.onSpineOverlay?.(Float32Array.from(last.key_positions.flat()));
    }
    return frames;
  }

  async stopSim(): Promise<void> {
    await this.api.simStop(this.requireSession());
    await this.refreshSnapshot();
  }

  async done(message: string): Promise<void> {
    await this.api.command(this.requireSession(), 'done', { message });
    this.sessionId = null;
  }
}
