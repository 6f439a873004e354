/** base64 geometry block decoding (browser atob or node Buffer). */

import type { GeometryBlock } from './types.js';

function b64ToBytes(b64: string): Uint8Array {
  const g = globalThis as { atob?: (s: string) => string; Buffer?: { from(s: string, e: string): Uint8Array } };
  if (typeof g.atob === 'function') {
    const bin = g.atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  if (g.Buffer) return Uint8Array.from(g.Buffer.from(b64, 'base64'));
  throw new Error('no base64 decoder available');
}

export function decodeF32(block: GeometryBlock): Float32Array {
  if (block.dtype !== '<f4') throw new Error(`expected <f4, got ${block.dtype}`);
  const bytes = b64ToBytes(block.b64);
  return new Float32Array(bytes.buffer, bytes.byteOffset, bytes.byteLength / 4);
}

export function decodeI32(block: GeometryBlock): Int32Array {
  if (block.dtype !== '<i4') throw new Error(`expected <i4, got ${block.dtype}`);
  const bytes = b64ToBytes(block.b64);
  return new Int32Array(bytes.buffer, bytes.byteOffset, bytes.byteLength / 4);
}

export function blockLength(block: GeometryBlock): number {
  return block.shape.reduce((a, b) => a * b, 1);
}

/** Encode helper for tests/mocks; mirrors the server's little-endian layout. */
export function encodeF32(data: ArrayLike<number>, shape: number[]): GeometryBlock {
  const arr = new Float32Array(data);
  return { b64: bytesToB64(new Uint8Array(arr.buffer)), dtype: '<f4', shape };
}

export function encodeI32(data: ArrayLike<number>, shape: number[]): GeometryBlock {
  const arr = new Int32Array(data);
  return { b64: bytesToB64(new Uint8Array(arr.buffer)), dtype: '<i4', shape };
}

function bytesToB64(bytes: Uint8Array): string {
  const g = globalThis as { btoa?: (s: string) => string; Buffer?: { from(b: Uint8Array): { toString(e: string): string } } };
  if (g.Buffer) return g.Buffer.from(bytes).toString('base64');
  if (typeof g.btoa === 'function') {
    let bin = '';
    for (const b of bytes) bin += String.fromCharCode(b);
    return g.btoa(bin);
  }
  throw new Error('no base64 encoder available');
}
