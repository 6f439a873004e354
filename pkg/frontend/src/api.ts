/** Typed fetch client for the session service. */

import type {
  BranchInfo,
  CommandResponse,
  RibInfo,
  SessionInfo,
  SimFrame,
  Snapshot,
} from './types.js';

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ ok: boolean; status: number; text(): Promise<string> }>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(public baseUrl: string, fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? (globalThis.fetch as unknown as FetchLike);
    if (!this.fetchFn) throw new Error('no fetch implementation available');
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    if (!resp.ok) throw new ApiError(resp.status, text || `HTTP ${resp.status}`);
    return JSON.parse(text) as T;
  }

  createSession(rig: string): Promise<SessionInfo> {
    return this.request('POST', '/session', { rig });
  }

  command(sessionId: string, name: string, params: Record<string, unknown> = {}): Promise<CommandResponse> {
    return this.request('POST', `/session/${sessionId}/command`, { name, params });
  }

  async listRibs(sessionId: string): Promise<RibInfo[]> {
    const r = await this.command(sessionId, 'list_ribs');
    return (r.result as { ribs: RibInfo[] }).ribs;
  }

  async listBranches(sessionId: string): Promise<BranchInfo[]> {
    const r = await this.command(sessionId, 'list_spine_branches');
    return (r.result as { branches: BranchInfo[] }).branches;
  }

  snapshot(sessionId: string, view = '+z'): Promise<Snapshot> {
    return this.request('GET', `/session/${sessionId}/snapshot?view=${encodeURIComponent(view)}`);
  }

  weightColumn(sessionId: string, kind: 'rib' | 'spine', column: number): Promise<{
    kind: string;
    column: number;
    parts: { part_id: number; weights: { b64: string; dtype: '<f4'; shape: number[] } }[];
  }> {
    return this.request('GET', `/session/${sessionId}/weights?kind=${kind}&column=${column}`);
  }

  simStart(sessionId: string, config: Record<string, unknown>, schedule: Record<string, unknown>,
           maxFrames?: number): Promise<{ running: boolean; frame_count: number; time: number }> {
    return this.request('POST', `/session/${sessionId}/sim/start`, {
      config, schedule, max_frames: maxFrames ?? null, realtime: false,
      include_vertex_hash: false,
    });
  }

  simStop(sessionId: string): Promise<{ running: boolean; frame_count: number; time: number }> {
    return this.request('POST', `/session/${sessionId}/sim/stop`);
  }

  async simFrames(sessionId: string, since = 0): Promise<SimFrame[]> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/session/${sessionId}/sim/frames?since=${since}`, { method: 'GET' });
    const text = await resp.text();
    if (!resp.ok) throw new ApiError(resp.status, text);
    return text.split('\n').filter((l) => l.trim().length > 0)
      .map((l) => JSON.parse(l) as SimFrame);
  }
}
