/**
 * Minimal WebGL viewer: shaded mesh, rib/spine polylines, orbit camera,
 * screen-space rib picking. Positions-only updates rewrite the vertex buffer
 * and reuse the index buffer.
 */

import type { DecodedGeometry } from './controller.js';
import type { CameraView } from './types.js';

const MESH_VS = `
attribute vec3 position;
attribute vec3 normal;
attribute float highlight;
uniform mat4 mvp;
uniform mat4 model;
varying float vLight;
varying float vHighlight;
void main() {
  vec3 n = normalize(mat3(model) * normal);
  vec3 lightDir = normalize(vec3(0.5, 0.8, 0.6));
  vLight = 0.35 + 0.65 * max(dot(n, lightDir), 0.0);
  vHighlight = highlight;
  gl_Position = mvp * vec4(position, 1.0);
}
`;

const MESH_FS = `
precision mediump float;
varying float vLight;
varying float vHighlight;
uniform vec3 baseColor;
void main() {
  vec3 heat = mix(baseColor, vec3(1.0, 0.45, 0.1), clamp(vHighlight, 0.0, 1.0));
  gl_FragColor = vec4(heat * vLight, 1.0);
}
`;

const LINE_VS = `
attribute vec3 position;
uniform mat4 mvp;
void main() {
  gl_Position = mvp * vec4(position, 1.0);
  gl_PointSize = 7.0;
}
`;

const LINE_FS = `
precision mediump float;
uniform vec3 color;
void main() { gl_FragColor = vec4(color, 1.0); }
`;

interface LineSet {
  buffer: WebGLBuffer;
  count: number;
  color: [number, number, number];
  mode: number;
}

export interface Camera {
  yaw: number;
  pitch: number;
  distance: number;
  target: [number, number, number];
}

export class Renderer {
  private gl: WebGLRenderingContext;
  private meshProgram: WebGLProgram;
  private lineProgram: WebGLProgram;
  private positionBuf: WebGLBuffer;
  private normalBuf: WebGLBuffer;
  private highlightBuf: WebGLBuffer;
  private indexBuf: WebGLBuffer;
  private indexCount = 0;
  private faces: Int32Array | null = null;
  private nVerts = 0;
  private ribLines: LineSet[] = [];
  private spineLines: LineSet[] = [];
  private ribScreenAnchors: { ribId: number; world: [number, number, number] }[] = [];
  camera: Camera = { yaw: 0.6, pitch: 0.35, distance: 2.4, target: [0, 0, 0] };
  showRibs = true;
  showSpine = true;
  selectedRibs = new Set<number>();

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext('webgl');
    if (!gl) throw new Error('WebGL unavailable');
    this.gl = gl;
    this.meshProgram = this.compile(MESH_VS, MESH_FS);
    this.lineProgram = this.compile(LINE_VS, LINE_FS);
    this.positionBuf = gl.createBuffer()!;
    this.normalBuf = gl.createBuffer()!;
    this.highlightBuf = gl.createBuffer()!;
    this.indexBuf = gl.createBuffer()!;
    gl.enable(gl.DEPTH_TEST);
  }

  private compile(vsSrc: string, fsSrc: string): WebGLProgram {
    const gl = this.gl;
    const mk = (type: number, src: string) => {
      const sh = gl.createShader(type)!;
      gl.shaderSource(sh, src);
      gl.compileShader(sh);
      if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(sh) ?? 'shader error');
      }
      return sh;
    };
    const prog = gl.createProgram()!;
    gl.attachShader(prog, mk(gl.VERTEX_SHADER, vsSrc));
    gl.attachShader(prog, mk(gl.FRAGMENT_SHADER, fsSrc));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(prog) ?? 'link error');
    }
    return prog;
  }

  /** Upload a snapshot; positions-only updates keep the existing index buffer. */
  setGeometry(geo: DecodedGeometry, positionsOnly: boolean): void {
    const gl = this.gl;
    const positions = this.concatParts(geo, (p) => p.positions);
    this.nVerts = positions.length / 3;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuf);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.DYNAMIC_DRAW);

    if (!positionsOnly || this.faces === null) {
      let offset = 0;
      const chunks: Int32Array[] = [];
      for (const part of geo.parts) {
        if (part.faces) {
          const shifted = new Int32Array(part.faces.length);
          for (let i = 0; i < part.faces.length; i++) shifted[i] = part.faces[i] + offset;
          chunks.push(shifted);
        }
        offset += part.positions.length / 3;
      }
      const total = chunks.reduce((a, c) => a + c.length, 0);
      const faces = new Int32Array(total);
      let at = 0;
      for (const c of chunks) { faces.set(c, at); at += c.length; }
      this.faces = faces;
      const u16 = new Uint16Array(faces.length);
      const u32ok = this.nVerts > 65535;
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.indexBuf);
      if (u32ok && gl.getExtension('OES_element_index_uint')) {
        gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, new Uint32Array(faces), gl.STATIC_DRAW);
        this.indexCount = -faces.length; // negative marks 32-bit indices
      } else {
        for (let i = 0; i < faces.length; i++) u16[i] = faces[i];
        gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, u16, gl.STATIC_DRAW);
        this.indexCount = faces.length;
      }
    }
    this.uploadNormals(positions);
    this.setHighlight(null);
    this.rebuildOverlays(geo);
  }

  private concatParts(geo: DecodedGeometry, pick: (p: DecodedGeometry['parts'][0]) => Float32Array): Float32Array {
    const total = geo.parts.reduce((a, p) => a + pick(p).length, 0);
    const out = new Float32Array(total);
    let at = 0;
    for (const p of geo.parts) { out.set(pick(p), at); at += pick(p).length; }
    return out;
  }

  private uploadNormals(positions: Float32Array): void {
    const gl = this.gl;
    const normals = new Float32Array(positions.length);
    const faces = this.faces;
    if (faces) {
      for (let f = 0; f < faces.length; f += 3) {
        const [a, b, c] = [faces[f] * 3, faces[f + 1] * 3, faces[f + 2] * 3];
        const ux = positions[b] - positions[a], uy = positions[b + 1] - positions[a + 1], uz = positions[b + 2] - positions[a + 2];
        const vx = positions[c] - positions[a], vy = positions[c + 1] - positions[a + 1], vz = positions[c + 2] - positions[a + 2];
        const nx = uy * vz - uz * vy, ny = uz * vx - ux * vz, nz = ux * vy - uy * vx;
        for (const idx of [a, b, c]) {
          normals[idx] += nx; normals[idx + 1] += ny; normals[idx + 2] += nz;
        }
      }
      for (let i = 0; i < normals.length; i += 3) {
        const len = Math.hypot(normals[i], normals[i + 1], normals[i + 2]) || 1;
        normals[i] /= len; normals[i + 1] /= len; normals[i + 2] /= len;
      }
    }
    gl.bindBuffer(gl.ARRAY_BUFFER, this.normalBuf);
    gl.bufferData(gl.ARRAY_BUFFER, normals, gl.DYNAMIC_DRAW);
  }

  /** Per-vertex weight heat (hover highlight); null clears. */
  setHighlight(perPart: Float32Array[] | null): void {
    const gl = this.gl;
    const data = new Float32Array(this.nVerts);
    if (perPart) {
      let at = 0;
      for (const w of perPart) { data.set(w, at); at += w.length; }
    }
    gl.bindBuffer(gl.ARRAY_BUFFER, this.highlightBuf);
    gl.bufferData(gl.ARRAY_BUFFER, data, gl.DYNAMIC_DRAW);
  }

  private rebuildOverlays(geo: DecodedGeometry): void {
    const gl = this.gl;
    this.ribLines = [];
    this.ribScreenAnchors = [];
    for (const rib of geo.ribs) {
      const pts = rib.closed
        ? new Float32Array([...rib.points, rib.points[0], rib.points[1], rib.points[2]])
        : rib.points;
      const buf = gl.createBuffer()!;
      gl.bindBuffer(gl.ARRAY_BUFFER, buf);
      gl.bufferData(gl.ARRAY_BUFFER, pts, gl.STATIC_DRAW);
      const selected = this.selectedRibs.has(rib.ribId);
      this.ribLines.push({
        buffer: buf, count: pts.length / 3,
        color: selected ? [1.0, 0.85, 0.1] : [0.15, 0.75, 0.9],
        mode: gl.LINE_STRIP,
      });
      let cx = 0, cy = 0, cz = 0;
      for (let i = 0; i < rib.points.length; i += 3) {
        cx += rib.points[i]; cy += rib.points[i + 1]; cz += rib.points[i + 2];
      }
      const n = rib.points.length / 3;
      this.ribScreenAnchors.push({ ribId: rib.ribId, world: [cx / n, cy / n, cz / n] });
    }
    this.spineLines = [];
    const kp = geo.spine.keyPoints;
    for (const branch of geo.spine.branches) {
      const pts = new Float32Array(branch.length * 3);
      branch.forEach((k, i) => {
        pts[i * 3] = kp[k * 3]; pts[i * 3 + 1] = kp[k * 3 + 1]; pts[i * 3 + 2] = kp[k * 3 + 2];
      });
      const buf = gl.createBuffer()!;
      gl.bindBuffer(gl.ARRAY_BUFFER, buf);
      gl.bufferData(gl.ARRAY_BUFFER, pts, gl.STATIC_DRAW);
      this.spineLines.push({ buffer: buf, count: branch.length, color: [1.0, 0.55, 0.0], mode: gl.LINE_STRIP });
      this.spineLines.push({ buffer: buf, count: branch.length, color: [1.0, 0.3, 0.0], mode: gl.POINTS });
    }
  }

  /** Live spine overlay during simulation (keys only, mesh untouched). */
  setSpineOverlay(keyPositions: Float32Array, branches: number[][]): void {
    const gl = this.gl;
    this.spineLines = [];
    for (const branch of branches) {
      const pts = new Float32Array(branch.length * 3);
      branch.forEach((k, i) => {
        pts[i * 3] = keyPositions[k * 3];
        pts[i * 3 + 1] = keyPositions[k * 3 + 1];
        pts[i * 3 + 2] = keyPositions[k * 3 + 2];
      });
      const buf = gl.createBuffer()!;
      gl.bindBuffer(gl.ARRAY_BUFFER, buf);
      gl.bufferData(gl.ARRAY_BUFFER, pts, gl.STATIC_DRAW);
      this.spineLines.push({ buffer: buf, count: branch.length, color: [1.0, 0.55, 0.0], mode: gl.LINE_STRIP });
    }
  }

  setNamedView(view: CameraView): void {
    const table: Record<CameraView, [number, number]> = {
      '+x': [Math.PI / 2, 0], '-x': [-Math.PI / 2, 0],
      '+y': [0, Math.PI / 2 - 1e-3], '-y': [0, -Math.PI / 2 + 1e-3],
      '+z': [0, 0], '-z': [Math.PI, 0],
    };
    [this.camera.yaw, this.camera.pitch] = table[view];
  }

  orbit(dYaw: number, dPitch: number): void {
    this.camera.yaw += dYaw;
    this.camera.pitch = Math.max(-1.5, Math.min(1.5, this.camera.pitch + dPitch));
  }

  zoom(factor: number): void {
    this.camera.distance = Math.max(0.2, Math.min(10, this.camera.distance * factor));
  }

  private viewProjection(): Float32Array {
    const { yaw, pitch, distance, target } = this.camera;
    const eye: [number, number, number] = [
      target[0] + distance * Math.sin(yaw) * Math.cos(pitch),
      target[1] + distance * Math.sin(pitch),
      target[2] + distance * Math.cos(yaw) * Math.cos(pitch),
    ];
    const view = lookAt(eye, target, [0, 1, 0]);
    const aspect = this.canvas.width / Math.max(this.canvas.height, 1);
    const proj = perspective(0.9, aspect, 0.01, 100);
    return matMul(proj, view);
  }

  /** Nearest rib to a canvas point, within pixel radius; null when none. */
  pickRib(x: number, y: number, radius = 24): number | null {
    const mvp = this.viewProjection();
    let best: { ribId: number; d: number } | null = null;
    for (const anchor of this.ribScreenAnchors) {
      const p = project(mvp, anchor.world, this.canvas.width, this.canvas.height);
      if (!p) continue;
      const d = Math.hypot(p[0] - x, p[1] - y);
      if (d <= radius && (best === null || d < best.d)) best = { ribId: anchor.ribId, d };
    }
    return best ? best.ribId : null;
  }

  draw(): void {
    const gl = this.gl;
    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.clearColor(0.07, 0.08, 0.1, 1.0);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    const mvp = this.viewProjection();

    if (this.indexCount !== 0) {
      gl.useProgram(this.meshProgram);
      gl.uniformMatrix4fv(gl.getUniformLocation(this.meshProgram, 'mvp'), false, mvp);
      gl.uniformMatrix4fv(gl.getUniformLocation(this.meshProgram, 'model'), false, identity());
      gl.uniform3f(gl.getUniformLocation(this.meshProgram, 'baseColor'), 0.62, 0.64, 0.7);
      this.bindAttr(this.meshProgram, 'position', this.positionBuf, 3);
      this.bindAttr(this.meshProgram, 'normal', this.normalBuf, 3);
      this.bindAttr(this.meshProgram, 'highlight', this.highlightBuf, 1);
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.indexBuf);
      if (this.indexCount < 0) {
        gl.drawElements(gl.TRIANGLES, -this.indexCount, gl.UNSIGNED_INT, 0);
      } else {
        gl.drawElements(gl.TRIANGLES, this.indexCount, gl.UNSIGNED_SHORT, 0);
      }
    }

    gl.useProgram(this.lineProgram);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.lineProgram, 'mvp'), false, mvp);
    const sets = [
      ...(this.showRibs ? this.ribLines : []),
      ...(this.showSpine ? this.spineLines : []),
    ];
    for (const set of sets) {
      gl.uniform3f(gl.getUniformLocation(this.lineProgram, 'color'), ...set.color);
      this.bindAttr(this.lineProgram, 'position', set.buffer, 3);
      gl.drawArrays(set.mode, 0, set.count);
    }
  }

  private bindAttr(prog: WebGLProgram, name: string, buf: WebGLBuffer, size: number): void {
    const gl = this.gl;
    const loc = gl.getAttribLocation(prog, name);
    if (loc < 0) return;
    gl.bindBuffer(gl.ARRAY_BUFFER, buf);
    gl.enableVertexAttribArray(loc);
    gl.vertexAttribPointer(loc, size, gl.FLOAT, false, 0, 0);
  }
}

// -- small matrix helpers (column-major, WebGL convention) -------------------

function identity(): Float32Array {
  return new Float32Array([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]);
}

function lookAt(eye: number[], target: number[], up: number[]): Float32Array {
  const z = norm3(sub3(eye, target));
  const x = norm3(cross3(up, z));
  const y = cross3(z, x);
  return new Float32Array([
    x[0], y[0], z[0], 0,
    x[1], y[1], z[1], 0,
    x[2], y[2], z[2], 0,
    -dot3(x, eye), -dot3(y, eye), -dot3(z, eye), 1,
  ]);
}

function perspective(fovY: number, aspect: number, near: number, far: number): Float32Array {
  const f = 1 / Math.tan(fovY / 2);
  const nf = 1 / (near - far);
  return new Float32Array([
    f / aspect, 0, 0, 0,
    0, f, 0, 0,
    0, 0, (far + near) * nf, -1,
    0, 0, 2 * far * near * nf, 0,
  ]);
}

function matMul(a: Float32Array, b: Float32Array): Float32Array {
  const out = new Float32Array(16);
  for (let col = 0; col < 4; col++) {
    for (let row = 0; row < 4; row++) {
      let s = 0;
      for (let k = 0; k < 4; k++) s += a[k * 4 + row] * b[col * 4 + k];
      out[col * 4 + row] = s;
    }
  }
  return out;
}

function project(mvp: Float32Array, p: number[], w: number, h: number): [number, number] | null {
  const clip = [
    mvp[0] * p[0] + mvp[4] * p[1] + mvp[8] * p[2] + mvp[12],
    mvp[1] * p[0] + mvp[5] * p[1] + mvp[9] * p[2] + mvp[13],
    mvp[2] * p[0] + mvp[6] * p[1] + mvp[10] * p[2] + mvp[14],
    mvp[3] * p[0] + mvp[7] * p[1] + mvp[11] * p[2] + mvp[15],
  ];
  if (clip[3] <= 0) return null;
  return [(clip[0] / clip[3] * 0.5 + 0.5) * w, (0.5 - clip[1] / clip[3] * 0.5) * h];
}

const sub3 = (a: number[], b: number[]) => [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
const dot3 = (a: number[], b: number[]) => a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
const cross3 = (a: number[], b: number[]) => [
  a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0],
];
function norm3(a: number[]): number[] {
  const l = Math.hypot(a[0], a[1], a[2]) || 1;
  return [a[0] / l, a[1] / l, a[2] / l];
}
