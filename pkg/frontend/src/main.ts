/** DOM wiring: canvas + side panel driving the controller. */

import { ApiClient } from './api.js';
import { DecodedGeometry, EditorController } from './controller.js';
import { Renderer } from './renderer.js';
import { SLIDER_BINDINGS } from './state.js';
import { CAMERA_VIEWS, Primitive, RIB_PRIMITIVES, SPINE_PRIMITIVES } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setStatus(msg: string): void {
  el<HTMLDivElement>('status').textContent = msg;
}

async function boot(): Promise<void> {
  const canvas = el<HTMLCanvasElement>('viewport');
  const renderer = new Renderer(canvas);
  let lastGeometry: DecodedGeometry | null = null;

  const serverUrl = (new URLSearchParams(location.search)).get('server')
    ?? `${location.protocol}//${location.hostname}:8711`;
  const rigName = (new URLSearchParams(location.search)).get('rig') ?? 'demo';

  const controller = new EditorController(new ApiClient(serverUrl), {
    onGeometry: (geo, positionsOnly) => {
      lastGeometry = geo;
      renderer.selectedRibs = new Set(controller.state.selectedRibs);
      renderer.setGeometry(geo, positionsOnly);
      renderer.draw();
      el<HTMLSpanElement>('hash').textContent = geo.snapshotHash.slice(0, 12);
      el<HTMLSpanElement>('rest').textContent = controller.atRest() ? 'rest' : 'edited';
    },
    onSpineOverlay: (keys) => {
      if (lastGeometry) {
        renderer.setSpineOverlay(keys, lastGeometry.spine.branches);
        renderer.draw();
      }
    },
    onSelection: () => {
      renderer.selectedRibs = new Set(controller.state.selectedRibs);
      if (lastGeometry) renderer.setGeometry(lastGeometry, true);
      renderer.draw();
      rebuildRibList();
    },
    onHighlight: (weights) => {
      renderer.setHighlight(weights);
      renderer.draw();
    },
    onStatus: setStatus,
  });

  // -- camera interaction ----------------------------------------------------
  let dragging = false;
  let last: [number, number] = [0, 0];
  canvas.addEventListener('mousedown', (e) => {
    dragging = true;
    last = [e.offsetX, e.offsetY];
  });
  window.addEventListener('mouseup', () => { dragging = false; });
  canvas.addEventListener('mousemove', (e) => {
    if (dragging) {
      renderer.orbit((e.offsetX - last[0]) * 0.008, (last[1] - e.offsetY) * 0.008);
      last = [e.offsetX, e.offsetY];
      renderer.draw();
    } else {
      const rib = renderer.pickRib(e.offsetX, e.offsetY);
      void controller.hoverRib(rib).catch(() => undefined);
    }
  });
  canvas.addEventListener('wheel', (e) => {
    e.preventDefault();
    renderer.zoom(e.deltaY > 0 ? 1.1 : 0.9);
    renderer.draw();
  });
  canvas.addEventListener('click', (e) => {
    const rib = renderer.pickRib(e.offsetX, e.offsetY);
    if (rib !== null) void controller.selectRibs([rib]);
  });

  // -- view buttons, overlay toggles ------------------------------------------
  const viewsDiv = el<HTMLDivElement>('views');
  for (const view of CAMERA_VIEWS) {
    const btn = document.createElement('button');
    btn.textContent = view;
    btn.onclick = () => { renderer.setNamedView(view); renderer.draw(); };
    viewsDiv.appendChild(btn);
  }
  el<HTMLInputElement>('toggle-ribs').onchange = (e) => {
    renderer.showRibs = (e.target as HTMLInputElement).checked;
    renderer.draw();
  };
  el<HTMLInputElement>('toggle-spine').onchange = (e) => {
    renderer.showSpine = (e.target as HTMLInputElement).checked;
    renderer.draw();
  };

  // -- rib / branch panel ------------------------------------------------------
  function rebuildRibList(): void {
    const list = el<HTMLDivElement>('ribs');
    list.innerHTML = '';
    for (const rib of controller.ribs) {
      const row = document.createElement('div');
      row.className = 'rib-row'
        + (controller.state.selectedRibs.includes(rib.rib_id) ? ' selected' : '');
      row.textContent = `rib ${rib.rib_id} (level ${rib.level_index}.${rib.sub_index}`
        + `${rib.closed ? '' : ', open'})`;
      row.onclick = () => void controller.selectRibs([rib.rib_id]);
      row.onmouseenter = () => void controller.hoverRib(rib.rib_id).catch(() => undefined);
      row.onmouseleave = () => void controller.hoverRib(null);
      list.appendChild(row);
    }
    const branches = el<HTMLSelectElement>('branches');
    branches.innerHTML = '';
    controller.branches.forEach((b) => {
      const opt = document.createElement('option');
      opt.value = String(b.branch_id);
      opt.textContent = `branch ${b.branch_id} (${b.keys.length} keys)`;
      branches.appendChild(opt);
    });
    branches.onchange = () => void controller.selectBranch(Number(branches.value));
  }

  // -- primitive sliders --------------------------------------------------------
  const primSelect = el<HTMLSelectElement>('primitive');
  for (const p of [...RIB_PRIMITIVES, ...SPINE_PRIMITIVES]) {
    const opt = document.createElement('option');
    opt.value = p;
    opt.textContent = p;
    primSelect.appendChild(opt);
  }
  function rebuildSliders(): void {
    const prim = primSelect.value as Primitive;
    controller.setActivePrimitive(prim);
    const host = el<HTMLDivElement>('sliders');
    host.innerHTML = '';
    for (const binding of SLIDER_BINDINGS[prim]) {
      const label = document.createElement('label');
      label.textContent = binding.key;
      const input = document.createElement('input');
      input.type = 'range';
      input.min = String(binding.min);
      input.max = String(binding.max);
      input.step = String(binding.step);
      input.value = String(binding.initial);
      const valueSpan = document.createElement('span');
      valueSpan.textContent = input.value;
      input.oninput = () => {
        valueSpan.textContent = input.value;
        controller.sliderInput({ [binding.key]: Number(input.value) });
      };
      input.onchange = () => {
        // slider release: exactly one committed deform per gesture
        void controller.sliderRelease().then(() => {
          input.value = String(binding.initial);
          valueSpan.textContent = input.value;
          rebuildHistory();
        }).catch((err) => setStatus(String(err)));
      };
      label.appendChild(input);
      label.appendChild(valueSpan);
      host.appendChild(label);
    }
  }
  primSelect.onchange = rebuildSliders;

  // -- history strip, reset, keyframes ------------------------------------------
  function rebuildHistory(): void {
    const host = el<HTMLDivElement>('history');
    host.innerHTML = '';
    for (const entry of controller.state.history.slice(-12)) {
      const chip = document.createElement('span');
      chip.className = 'chip';
      chip.textContent = `${entry.label} ${entry.snapshotHash.slice(0, 6)}`;
      host.appendChild(chip);
    }
    const kfs = el<HTMLDivElement>('keyframes');
    kfs.innerHTML = '';
    for (const kf of controller.state.keyframes) {
      const chip = document.createElement('span');
      chip.className = 'chip kf';
      chip.textContent = `t=${kf.time.toFixed(2)} ${kf.snapshotHash.slice(0, 6)}`;
      kfs.appendChild(chip);
    }
  }
  el<HTMLButtonElement>('reset').onclick = () => {
    void controller.reset().then(() => {
      rebuildHistory();
      setStatus(controller.atRest() ? 'rest pose restored' : 'reset hash mismatch!');
    });
  };
  el<HTMLButtonElement>('capture').onclick = () => {
    controller.captureKeyframe(controller.state.keyframes.length * 0.5);
    rebuildHistory();
  };

  // -- simulation ------------------------------------------------------------------
  let simTimer: number | null = null;
  el<HTMLButtonElement>('sim-start').onclick = () => {
    void controller.startSim(
      { substeps: 2, pins: [0], k_s: 50.0, k_b: 0.5, alpha: 1.0 },
      { gravity_on: true },
    ).then(() => {
      simTimer = window.setInterval(() => {
        void controller.pollSimFrames().catch(() => undefined);
      }, 80);
      setStatus('simulating');
    });
  };
  el<HTMLButtonElement>('sim-stop').onclick = () => {
    if (simTimer !== null) window.clearInterval(simTimer);
    simTimer = null;
    void controller.stopSim().then(() => setStatus('simulation stopped'));
  };

  await controller.connect(rigName);
  rebuildRibList();
  rebuildSliders();
  rebuildHistory();
}

void boot().catch((err) => setStatus(`connection failed: ${err}`));
