/**
 * Editor view state. Selection always mirrors the last server response; the
 * client never invents selection or pose locally.
 */

import type { CameraView, Primitive } from './types.js';

export interface SliderBinding {
  key: string;            // parameter name
  min: number;
  max: number;
  step: number;
  initial: number;        // identity value
}

/** Per-primitive slider layouts; identity initials make untouched sliders no-ops. */
export const SLIDER_BINDINGS: Record<Primitive, SliderBinding[]> = {
  uniform_scale: [{ key: 's', min: 0.2, max: 3.0, step: 0.01, initial: 1.0 }],
  aniso_scale: [
    { key: 'sx', min: 0.2, max: 3.0, step: 0.01, initial: 1.0 },
    { key: 'sy', min: 0.2, max: 3.0, step: 0.01, initial: 1.0 },
    { key: 'sz', min: 0.2, max: 3.0, step: 0.01, initial: 1.0 },
  ],
  translate: [
    { key: 'dx', min: -0.5, max: 0.5, step: 0.005, initial: 0.0 },
    { key: 'dy', min: -0.5, max: 0.5, step: 0.005, initial: 0.0 },
    { key: 'dz', min: -0.5, max: 0.5, step: 0.005, initial: 0.0 },
  ],
  rotate: [{ key: 'angle', min: -Math.PI, max: Math.PI, step: 0.01, initial: 0.0 }],
  local_drag: [
    { key: 'anchor_t', min: 0.0, max: 1.0, step: 0.01, initial: 0.0 },
    { key: 'dy', min: -0.3, max: 0.3, step: 0.005, initial: 0.0 },
    { key: 'sigma', min: 0.01, max: 0.5, step: 0.01, initial: 0.1 },
  ],
  reshape: [{ key: 'blend', min: 0.0, max: 1.0, step: 0.01, initial: 0.0 }],
  stretch: [
    { key: 's', min: 0.3, max: 2.5, step: 0.01, initial: 1.0 },
    { key: 't_a', min: 0.0, max: 1.0, step: 0.01, initial: 0.0 },
  ],
  bend: [
    { key: 'angle', min: -Math.PI, max: Math.PI, step: 0.01, initial: 0.0 },
    { key: 't_a', min: 0.0, max: 1.0, step: 0.01, initial: 0.0 },
  ],
  twist: [
    { key: 'psi_max', min: -Math.PI, max: Math.PI, step: 0.01, initial: 0.0 },
    { key: 't_start', min: 0.0, max: 1.0, step: 0.01, initial: 0.0 },
    { key: 't_end', min: 0.0, max: 1.0, step: 0.01, initial: 1.0 },
  ],
};

/** Translate slider values into the service's deform parameter objects. */
export function sliderValuesToParams(primitive: Primitive, values: Record<string, number>):
    Record<string, unknown> {
  if (primitive === 'translate' || primitive === 'local_drag') {
    const { dx = 0, dy = 0, dz = 0, ...rest } = values;
    return { ...rest, d: [dx, dy, dz] };
  }
  if (primitive === 'rotate') {
    return { axis: [0, 1, 0], angle: values.angle ?? 0 };
  }
  if (primitive === 'bend') {
    return { axis: 'N', angle: values.angle ?? 0, t_a: values.t_a ?? 0 };
  }
  if (primitive === 'reshape') {
    return { template: 'square', blend: values.blend ?? 0 };
  }
  return { ...values };
}

export interface OverlayFlags {
  ribs: boolean;
  spine: boolean;
  weightsHeatmap: boolean;
}

export interface HistoryEntry {
  label: string;
  snapshotHash: string;
  command: { primitive: Primitive; params: Record<string, unknown> } | { reset: true };
}

export interface KeyframeMark {
  time: number;
  snapshotHash: string;
}

export interface ViewState {
  camera: { yaw: number; pitch: number; distance: number; target: [number, number, number] };
  namedView: CameraView;
  overlays: OverlayFlags;
  selectedRibs: number[];       // re-synced from server responses
  selectedBranch: number;
  activePrimitive: Primitive;
  snapshotHash: string | null;  // hash of the currently displayed state
  restHash: string | null;
  history: HistoryEntry[];
  keyframes: KeyframeMark[];
}

export function initialViewState(): ViewState {
  return {
    camera: { yaw: 0.6, pitch: 0.35, distance: 2.2, target: [0, 0, 0] },
    namedView: '+z',
    overlays: { ribs: true, spine: true, weightsHeatmap: false },
    selectedRibs: [],
    selectedBranch: 0,
    activePrimitive: 'uniform_scale',
    snapshotHash: null,
    restHash: null,
    history: [],
    keyframes: [],
  };
}
