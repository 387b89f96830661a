import assert from "node:assert/strict";
import { test } from "node:test";
import { defaultStage1Form, defaultStage2Form, groupTotal, renormalize, stage1Metrics, stage2Metrics, validatePercentGroup, validateRoadDensity, } from "../src/forms.js";
test("defaults total exactly 100", () => {
    assert.equal(groupTotal(defaultStage1Form().landUse), 100);
    assert.equal(groupTotal(defaultStage2Form()), 100);
});
test("renormalize keeps the group at 100", () => {
    let values = defaultStage1Form().landUse;
    for (const [index, next] of [[0, 80], [2, 33.3], [4, 0], [1, 100]]) {
        values = renormalize(values, index, next);
        assert.equal(groupTotal(values), 100, `after setting ${index} to ${next}`);
        assert.equal(values[index], Math.min(100, next));
        for (const v of values)
            assert.ok(v >= 0, `negative slot in ${values}`);
    }
});
test("renormalize distributes when the rest are zero", () => {
    const values = renormalize([100, 0, 0, 0, 0], 0, 40);
    assert.equal(groupTotal(values), 100);
    assert.equal(values[0], 40);
    // The remaining 60 spreads over the other four slots.
    for (const v of values.slice(1))
        assert.ok(v > 0);
});
test("negative entry is rejected", () => {
    assert.throws(() => renormalize([20, 20, 20, 20, 20], 1, -5), RangeError);
    assert.equal(validatePercentGroup([-1, 50, 51]).ok, false);
    assert.equal(validateRoadDensity(-0.1).ok, false);
});
test("group sums away from 100 fail validation", () => {
    assert.equal(validatePercentGroup([50, 30, 10]).ok, false);
    assert.equal(validatePercentGroup([50, 30, 20]).ok, true);
    assert.equal(validatePercentGroup([200]).ok, false);
});
test("form state converts to service metric fractions", () => {
    const m1 = stage1Metrics([60, 15, 5, 15, 5], 18);
    assert.equal(m1.road_density, 0.18);
    assert.deepEqual(m1.land_use, [0.6, 0.15, 0.05, 0.15, 0.05]);
    assert.equal(m1.open_space, 1);
    const m2 = stage2Metrics([20.5, 40.58, 5.64, 33.28]);
    assert.deepEqual(m2.height_coverage, [0.205, 0.4058, 0.0564]);
    assert.equal(m2.open_space, 0.3328);
});
test("renormalize clamps overshoot at 100", () => {
    const values = renormalize([10, 30, 60], 0, 250);
    assert.equal(values[0], 100);
    assert.equal(groupTotal(values), 100);
});
