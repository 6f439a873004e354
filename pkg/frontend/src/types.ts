/**
 * Wire types for the fishbone session service.
 *
 * Geometry blocks are base64 little-endian typed arrays; the server is the
 * single source of truth for selection and pose (snapshot hashes identify
 * every displayed state).
 */

export interface GeometryBlock {
  b64: string;
  dtype: '<f4' | '<i4';
  shape: number[];
}

export interface PartGeometry {
  part_id: number;
  positions: GeometryBlock;
  faces?: GeometryBlock | null;
}

export interface RibGeometry {
  rib_id: number;
  closed: boolean;
  part_id: number;
  points: GeometryBlock;
}

export interface SpineGeometry {
  key_points: GeometryBlock;
  branches: number[][];
  junctions: number[];
}

export interface Snapshot {
  snapshot_hash: string;
  view: string;
  parts: PartGeometry[];
  ribs: RibGeometry[];
  spine: SpineGeometry;
}

export interface SessionInfo {
  session_id: string;
  n_parts: number;
  n_ribs: number;
  n_keys: number;
  n_branches: number;
  rest_hash: string;
}

export interface CommandResponse {
  ok: boolean;
  name: string;
  result: Record<string, unknown>;
  snapshot_hash?: string | null;
}

export interface RibInfo {
  rib_id: number;
  level_index: number;
  sub_index: number;
  closed: boolean;
  part_id: number;
  n_points: number;
  centroid: number[];
}

export interface BranchInfo {
  branch_id: number;
  keys: number[];
  rest_length: number;
}

export interface SimFrame {
  frame: number;
  time: number;
  key_positions: number[][];
  vertex_hash?: string;
}

export type RibPrimitive =
  | 'uniform_scale' | 'aniso_scale' | 'translate'
  | 'rotate' | 'local_drag' | 'reshape';
export type SpinePrimitive = 'stretch' | 'bend' | 'twist';
export type Primitive = RibPrimitive | SpinePrimitive;

export const RIB_PRIMITIVES: RibPrimitive[] = [
  'uniform_scale', 'aniso_scale', 'translate', 'rotate', 'local_drag', 'reshape',
];
export const SPINE_PRIMITIVES: SpinePrimitive[] = ['stretch', 'bend', 'twist'];

export const CAMERA_VIEWS = ['+x', '-x', '+y', '-y', '+z', '-z'] as const;
export type CameraView = typeof CAMERA_VIEWS[number];
