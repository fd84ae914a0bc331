import { mkdir, writeFile } from "node:fs/promises";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { ArrayView, fromNested, toNested, view } from "../src/arrayview.js";
import {
  boundAdapterApply,
  boundGaussianNll,
  boundPatchWLoss,
  boundRegionReg,
  boundSinkhorn,
} from "../src/kernels.js";
import { encodeImagePgm, encodeMaskPgm } from "../src/pgm.js";
import { runCli } from "../src/runner.js";
import {
  adapterModelBytes,
  expectUnchanged,
  fullCelsius,
  mulberry32,
  randMask,
  randPoints,
  randUnitImage,
  snapshot,
  withDir,
} from "./helpers.js";

const TOL = 1e-12;

function expectClose(got: number, want: number, label: string): void {
  expect(Math.abs(got - want), `${label}: ${got} vs ${want}`).toBeLessThanOrEqual(TOL);
}

function expectViewClose(got: ArrayView, want: unknown, label: string): void {
  const ref = fromNested(want);
  expect([...got.shape], `${label} shape`).toEqual(ref.shape);
  for (let i = 0; i < ref.data.length; i++) {
    if (Math.abs(got.data[i] - ref.data[i]) > TOL) {
      throw new Error(`${label}[${i}]: ${got.data[i]} vs ${ref.data[i]}`);
    }
  }
}

// Each test here runs the same computation twice: once through the typed
// binding and once through a direct CLI invocation on files the test wrote
// itself. The direct run is the reference; the binding must reproduce it.

describe("bindings match direct CLI invocations", () => {
  it("sinkhorn transport", async () => {
    const rand = mulberry32(11);
    const mu = randPoints(rand, 7, -2, 2);
    const nu = randPoints(rand, 5, -2, 2);
    const snaps = [snapshot(mu), snapshot(nu)];

    const got = await boundSinkhorn(mu, nu, { lambdaE: 0.05, tol: 1e-9, maxIters: 5000 });
    expectUnchanged("mu", mu, snaps[0]);
    expectUnchanged("nu", nu, snaps[1]);

    await withDir(async (dir) => {
      const muPath = join(dir, "mu.json");
      const nuPath = join(dir, "nu.json");
      await writeFile(muPath, JSON.stringify(toNested(mu)));
      await writeFile(nuPath, JSON.stringify(toNested(nu)));
      const { doc } = await runCli([
        "ot",
        "sinkhorn",
        "--mu",
        muPath,
        "--nu",
        nuPath,
        "--lambda-e",
        "0.05",
        "--tol",
        "1e-9",
        "--max-iters",
        "5000",
      ]);
      const r = doc.result;
      expectClose(got.cost, r.cost as number, "cost");
      expectClose(got.transportCost, r.transport_cost as number, "transport_cost");
      expect(got.converged).toBe(r.converged);
      expect(got.iterations).toBe(r.iterations);
      expectClose(got.maxViolation, r.max_violation as number, "max_violation");
      expect(got.stageCosts).toHaveLength((r.stage_costs as number[]).length);
      (r.stage_costs as number[]).forEach((c, i) =>
        expectClose(got.stageCosts[i], c, `stage_costs[${i}]`),
      );
      expectViewClose(got.plan, r.plan, "plan");
    });
  });

  it("patch loss with a mixed masked and unmasked batch", async () => {
    const rand = mulberry32(23);
    const gen0 = randUnitImage(rand, 12, 10);
    const gen0Mask = randMask(rand, 12, 10, 3);
    const gen1 = randUnitImage(rand, 12, 10);
    const real0 = randUnitImage(rand, 12, 10);
    const real1 = randUnitImage(rand, 12, 10);
    const snaps = [gen0, gen0Mask, gen1, real0, real1].map(snapshot);

    const opts = {
      seed: 3,
      patchSize: 4,
      stride: 2,
      scales: 2,
      maxPatches: 64,
      lambdaE: 0.02,
      tol: 1e-8,
      maxIters: 3000,
    };
    const got = await boundPatchWLoss(
      [{ image: gen0, mask: gen0Mask }, { image: gen1 }],
      [real0, real1],
      opts,
    );
    [gen0, gen0Mask, gen1, real0, real1].forEach((v, i) =>
      expectUnchanged(`input ${i}`, v, snaps[i]),
    );

    await withDir(async (dir) => {
      const paths = {
        gen0: join(dir, "gen0.pgm"),
        gen0Mask: join(dir, "gen0_mask.pgm"),
        gen1: join(dir, "gen1.pgm"),
        real0: join(dir, "real0.pgm"),
        real1: join(dir, "real1.pgm"),
      };
      await writeFile(paths.gen0, encodeImagePgm(gen0));
      await writeFile(paths.gen0Mask, encodeMaskPgm(gen0Mask));
      await writeFile(paths.gen1, encodeImagePgm(gen1));
      await writeFile(paths.real0, encodeImagePgm(real0));
      await writeFile(paths.real1, encodeImagePgm(real1));
      const { doc } = await runCli([
        "loss",
        "patch-w",
        "--gen",
        paths.gen0,
        "--gen-mask",
        paths.gen0Mask,
        "--gen",
        paths.gen1,
        "--gen-mask",
        "-",
        "--real",
        paths.real0,
        "--real",
        paths.real1,
        "--seed",
        "3",
        "--patch-size",
        "4",
        "--stride",
        "2",
        "--scales",
        "2",
        "--max-patches",
        "64",
        "--lambda-e",
        "0.02",
        "--tol",
        "1e-8",
        "--max-iters",
        "3000",
        "--with-grads",
      ]);
      const r = doc.result;
      expectClose(got.value, r.value as number, "value");
      expect(got.converged).toBe(r.converged);
      expect(got.skippedScales).toEqual(r.skipped_scales);
      const scales = r.scales as Array<Record<string, unknown>>;
      expect(got.scales).toHaveLength(scales.length);
      scales.forEach((s, i) => {
        expect(got.scales[i].scale).toBe(s.scale);
        expect(got.scales[i].genCount).toBe(s.gen_count);
        expect(got.scales[i].realCount).toBe(s.real_count);
        expect(got.scales[i].used).toBe(s.used);
        expect(got.scales[i].converged).toBe(s.converged);
        expect(got.scales[i].skipped).toBe(s.skipped);
        if (s.cost === null) expect(got.scales[i].cost).toBeNull();
        else expectClose(got.scales[i].cost as number, s.cost as number, `scales[${i}].cost`);
      });
      const grads = r.grads as unknown[];
      expect(got.grads).toHaveLength(grads.length);
      grads.forEach((g, i) => expectViewClose(got.grads[i], g, `grads[${i}]`));
    });
  });

  it("region regularizer with an inline profile", async () => {
    const rand = mulberry32(37);
    const image = randUnitImage(rand, 16, 16);
    const mask = randMask(rand, 16, 16, 5);
    const profile = {
      name: "mixed",
      celsius: fullCelsius({ 0: 18.0, 1: 24.5, 2: 36.0, 3: 20.0, 4: 41.0, 5: 33.25 }),
    };
    const snaps = [snapshot(image), snapshot(mask)];

    const got = await boundRegionReg(image, mask, { profile, includeBackground: false });
    expectUnchanged("image", image, snaps[0]);
    expectUnchanged("mask", mask, snaps[1]);

    await withDir(async (dir) => {
      const imgPath = join(dir, "image.pgm");
      const maskPath = join(dir, "mask.pgm");
      const profPath = join(dir, "prof.json");
      await writeFile(imgPath, encodeImagePgm(image));
      await writeFile(maskPath, encodeMaskPgm(mask));
      await writeFile(profPath, JSON.stringify(profile));
      const { doc } = await runCli([
        "loss",
        "region",
        "--image",
        imgPath,
        "--mask",
        maskPath,
        "--profile",
        profPath,
        "--no-include-background",
        "--with-grads",
      ]);
      expectClose(got.value, doc.result.value as number, "value");
      expectViewClose(got.grads, doc.result.grads, "grads");
    });
  });

  it("region value agrees with the problem-bundle evaluation route", async () => {
    const rand = mulberry32(41);
    const image = randUnitImage(rand, 12, 12);
    const mask = randMask(rand, 12, 12, 4);
    const profile = { name: "bundle", celsius: fullCelsius({ 2: 22.0, 4: 39.0 }) };

    const got = await boundRegionReg(image, mask, { profile });

    await withDir(async (dir) => {
      const bundle = join(dir, "bundle");
      await mkdir(join(bundle, "unpaired"), { recursive: true });
      await writeFile(join(bundle, "unpaired", "sample.pgm"), encodeImagePgm(image));
      await writeFile(join(bundle, "unpaired", "sample_mask.pgm"), encodeMaskPgm(mask));
      const profPath = join(dir, "prof.json");
      await writeFile(profPath, JSON.stringify(profile));
      const { doc } = await runCli([
        "loss",
        "eval",
        "--problem",
        bundle,
        "--lambda-w",
        "0",
        "--lambda-r",
        "1",
        "--profile",
        profPath,
      ]);
      const r = doc.result as Record<string, unknown>;
      const breakdown = r.breakdown as Record<string, number>;
      expect(r.n_paired).toBe(0);
      expect(r.n_unpaired).toBe(1);
      expectClose(got.value, breakdown.region_raw, "region_raw");
      expectClose(got.value, breakdown.weighted_region, "weighted_region");
      expectClose(got.value, breakdown.total, "total");
    });
  });

  it("gaussian landmark objective with a clipped variance", async () => {
    const rand = mulberry32(53);
    const mu = randPoints(rand, 6, -5, 5);
    const gt = randPoints(rand, 6, -5, 5);
    // 1e-9 sits below the default clip floor and must zero its gradient
    const sigma2 = view([6], [2.0, 0.5, 1e-9, 3.25, 1.0, 0.125]);
    const snaps = [snapshot(mu), snapshot(gt), snapshot(sigma2)];

    const got = await boundGaussianNll(mu, sigma2, gt);
    expectUnchanged("mu", mu, snaps[0]);
    expectUnchanged("gt", gt, snaps[1]);
    expectUnchanged("sigma2", sigma2, snaps[2]);
    expect(got.gradSigma2.data[2]).toBe(0);

    await withDir(async (dir) => {
      const muPath = join(dir, "mu.json");
      const gtPath = join(dir, "gt.json");
      const s2Path = join(dir, "s2.json");
      await writeFile(muPath, JSON.stringify({ points: toNested(mu) }));
      await writeFile(gtPath, JSON.stringify({ points: toNested(gt) }));
      await writeFile(s2Path, JSON.stringify(toNested(sigma2)));
      const { doc } = await runCli([
        "landmarks",
        "nll",
        "--mu",
        muPath,
        "--gt",
        gtPath,
        "--sigma2",
        s2Path,
      ]);
      expectClose(got.value, doc.result.value as number, "value");
      expectViewClose(got.gradMu, doc.result.grad_mu, "grad_mu");
      expectViewClose(got.gradSigma2, doc.result.grad_sigma2, "grad_sigma2");
    });
  });

  it("adapter application with a CLI-trained model", async () => {
    await withDir(async (dir) => {
      const pairsPath = join(dir, "pairs.json");
      const modelPath = join(dir, "tiny.model");
      const samples = [
        { pred: [[0.1, 0.2], [0.3, 0.4]], resize: 1.0, gt: [[0.15, 0.25], [0.35, 0.45]] },
        { pred: [[0.5, 0.1], [0.2, 0.9]], resize: 0.5, gt: [[0.45, 0.15], [0.25, 0.85]] },
        { pred: [[0.8, 0.7], [0.6, 0.3]], resize: 2.0, gt: [[0.75, 0.65], [0.55, 0.35]] },
      ];
      await writeFile(pairsPath, JSON.stringify({ samples }));
      await runCli([
        "adapt",
        "train",
        "--pairs",
        pairsPath,
        "--model-out",
        modelPath,
        "--epochs",
        "2",
        "--hidden",
        "8",
        "--seed",
        "5",
      ]);

      const pred = view([2, 2], [0.2, 0.8, 0.5, 0.1]);
      const snap = snapshot(pred);
      const got = await boundAdapterApply(modelPath, pred, 0.75);
      expectUnchanged("pred", pred, snap);

      const predPath = join(dir, "pred.json");
      await writeFile(predPath, JSON.stringify({ points: toNested(pred) }));
      const { doc } = await runCli([
        "adapt",
        "apply",
        "--model",
        modelPath,
        "--pred",
        predPath,
        "--resize",
        "0.75",
      ]);
      const adapted = doc.result.adapted as Record<string, unknown>;
      expect(got.conventionSize).toBe(adapted.convention_size);
      expectViewClose(got.points, adapted.points, "points");
    });
  });
});

describe("concurrent invocation", () => {
  it("eight simultaneous mixed calls return the same results as serial runs", async () => {
    await withDir(async (dir) => {
      const modelPath = join(dir, "zero.model");
      await writeFile(
        modelPath,
        adapterModelBytes([5, 4], [...new Array(20).fill(0), 0.5, -1.25, 3.0, 0.0625]),
      );

      const rand = mulberry32(71);
      const profile = { name: "mixed", celsius: fullCelsius({ 1: 25.0, 3: 38.0 }) };
      const inputs = {
        ptsA: randPoints(rand, 6, -1, 1),
        ptsB: randPoints(rand, 4, -1, 1),
        ptsC: randPoints(rand, 5, 0, 3),
        ptsD: randPoints(rand, 5, 0, 3),
        imgA: randUnitImage(rand, 10, 10),
        maskA: randMask(rand, 10, 10, 4),
        imgB: randUnitImage(rand, 8, 12),
        maskB: randMask(rand, 8, 12, 5),
        muA: randPoints(rand, 5, -2, 2),
        gtA: randPoints(rand, 5, -2, 2),
        muB: randPoints(rand, 3, -4, 4),
        gtB: randPoints(rand, 3, -4, 4),
        predA: randPoints(rand, 2, 0, 1),
        predB: randPoints(rand, 2, 0, 1),
      };
      const s2A = view([5], [1.0, 0.25, 2.0, 0.5, 4.0]);
      const s2B = view([3], [0.125, 1.5, 3.0]);
      const snaps = Object.entries(inputs).map(([k, v]) => [k, snapshot(v)] as const);

      const thunks: Array<() => Promise<unknown>> = [
        () => boundSinkhorn(inputs.ptsA, inputs.ptsB, { lambdaE: 0.1 }),
        () => boundSinkhorn(inputs.ptsC, inputs.ptsD, { lambdaE: 0.05 }),
        () => boundRegionReg(inputs.imgA, inputs.maskA, { profile }),
        () => boundRegionReg(inputs.imgB, inputs.maskB, { profile, includeBackground: false }),
        () => boundGaussianNll(inputs.muA, s2A, inputs.gtA),
        () => boundGaussianNll(inputs.muB, s2B, inputs.gtB),
        () => boundAdapterApply(modelPath, inputs.predA, 0.5),
        () => boundAdapterApply(modelPath, inputs.predB, 1.25),
      ];

      const serial: unknown[] = [];
      for (const thunk of thunks) serial.push(await thunk());
      const concurrent = await Promise.all(thunks.map((thunk) => thunk()));

      concurrent.forEach((res, i) => expect(res).toEqual(serial[i]));
      for (const [k, snap] of snaps) {
        expectUnchanged(k, inputs[k as keyof typeof inputs], snap);
      }
    });
  });
});
