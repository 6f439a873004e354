import assert from 'node:assert/strict';
import { test } from 'node:test';

import { SLIDER_BINDINGS, initialViewState, sliderValuesToParams } from '../src/state.js';
import { RIB_PRIMITIVES, SPINE_PRIMITIVES } from '../src/types.js';

test('every primitive has slider bindings with identity initials', () => {
  for (const p of [...RIB_PRIMITIVES, ...SPINE_PRIMITIVES]) {
    const bindings = SLIDER_BINDINGS[p];
    assert.ok(bindings.length > 0, p);
    for (const b of bindings) {
      assert.ok(b.min <= b.initial && b.initial <= b.max, `${p}.${b.key}`);
    }
  }
});

test('translate sliders assemble a displacement vector', () => {
  const params = sliderValuesToParams('translate', { dx: 0.1, dy: -0.2, dz: 0.0 });
  assert.deepEqual(params, { d: [0.1, -0.2, 0.0] });
});

test('bend sliders include the frame axis', () => {
  const params = sliderValuesToParams('bend', { angle: 0.4, t_a: 0.25 });
  assert.deepEqual(params, { axis: 'N', angle: 0.4, t_a: 0.25 });
});

test('reshape sliders include the template', () => {
  assert.deepEqual(sliderValuesToParams('reshape', { blend: 0.6 }),
                   { template: 'square', blend: 0.6 });
});

test('scalar primitives pass values through', () => {
  assert.deepEqual(sliderValuesToParams('uniform_scale', { s: 1.5 }), { s: 1.5 });
  assert.deepEqual(sliderValuesToParams('stretch', { s: 1.2, t_a: 0.1 }),
                   { s: 1.2, t_a: 0.1 });
});

test('initial view state starts unselected with overlays on', () => {
  const st = initialViewState();
  assert.deepEqual(st.selectedRibs, []);
  assert.equal(st.overlays.ribs, true);
  assert.equal(st.overlays.spine, true);
  assert.equal(st.snapshotHash, null);
  assert.equal(st.history.length, 0);
});
