/**
 * Typed bindings over the thermoloss CLI.
 *
 * Each function validates its arguments, serializes them to the CLI's file
 * formats inside a private temp directory, runs one subprocess, and decodes
 * the JSON document back into typed results. Inputs are never mutated and
 * no state is shared between calls, so concurrent invocation is safe.
 */

import { mkdtemp, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ArrayView, checkView, fromNested, toNested, view } from "./arrayview.js";
import { encodeImagePgm, encodeMaskPgm } from "./pgm.js";
import { runCli } from "./runner.js";

async function withTmpDir<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "thermoloss-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

async function writeJson(dir: string, name: string, value: unknown): Promise<string> {
  const path = join(dir, name);
  await writeFile(path, JSON.stringify(value));
  return path;
}

/** Point-measure JSON: nested [[x, y, ...], ...] list. */
function pointsJson(v: ArrayView): unknown {
  return toNested(v);
}

/** Landmark-set JSON: {"points": [[x, y], ...]}. */
function landmarksJson(v: ArrayView): unknown {
  return { points: toNested(v) };
}

function decodeView(nested: unknown): ArrayView {
  const { shape, data } = fromNested(nested);
  return view(shape, data);
}

/** Append `--flag value` pairs for every option that is actually set. */
function numberFlags(pairs: Array<[string, number | undefined]>): string[] {
  const out: string[] = [];
  for (const [flag, value] of pairs) {
    if (value === undefined) continue;
    if (typeof value !== "number" || !Number.isFinite(value)) {
      throw new Error(`${flag}: expected a finite number, got ${String(value)}`);
    }
    out.push(flag, String(value));
  }
  return out;
}

function booleanFlag(flag: string, value: boolean | undefined): string[] {
  if (value === undefined) return [];
  return [value ? flag : flag.replace(/^--/, "--no-")];
}

export interface SinkhornOptions {
  lambdaE?: number;
  tol?: number;
  maxIters?: number;
  anneal?: boolean;
}

export interface SinkhornResult {
  /** entropy-regularized objective at the returned plan */
  cost: number;
  /** plain transport cost <plan, squared distances> */
  transportCost: number;
  converged: boolean;
  iterations: number;
  maxViolation: number;
  stageCosts: number[];
  /** transport plan, shape [n, m] */
  plan: ArrayView;
}

function sinkhornFlags(opts: SinkhornOptions): string[] {
  return [
    ...numberFlags([
      ["--lambda-e", opts.lambdaE],
      ["--tol", opts.tol],
      ["--max-iters", opts.maxIters],
    ]),
    ...booleanFlag("--anneal", opts.anneal),
  ];
}

/** Entropic optimal transport between two weighted-equal point clouds. */
export async function boundSinkhorn(
  mu: ArrayView,
  nu: ArrayView,
  opts: SinkhornOptions = {},
): Promise<SinkhornResult> {
  checkView("mu", mu, { dims: 2 });
  checkView("nu", nu, { dims: 2 });
  if (mu.shape[0] === 0) throw new Error("mu: needs at least one point");
  if (nu.shape[0] === 0) throw new Error("nu: needs at least one point");
  if (nu.shape[1] !== mu.shape[1]) {
    throw new Error(
      `nu: point dimension ${nu.shape[1]} does not match mu point dimension ${mu.shape[1]}`,
    );
  }
  return withTmpDir(async (dir) => {
    const muPath = await writeJson(dir, "mu.json", pointsJson(mu));
    const nuPath = await writeJson(dir, "nu.json", pointsJson(nu));
    const { doc } = await runCli([
      "ot",
      "sinkhorn",
      "--mu",
      muPath,
      "--nu",
      nuPath,
      ...sinkhornFlags(opts),
    ]);
    const r = doc.result;
    return {
      cost: r.cost as number,
      transportCost: r.transport_cost as number,
      converged: r.converged as boolean,
      iterations: r.iterations as number,
      maxViolation: r.max_violation as number,
      stageCosts: r.stage_costs as number[],
      plan: decodeView(r.plan),
    };
  });
}

export interface GenImage {
  /** unit-interval image, shape [h, w] */
  image: ArrayView;
  /** optional region-label mask, same shape; masked images contribute only foreground patches */
  mask?: ArrayView;
}

export interface PatchWOptions extends SinkhornOptions {
  seed?: number;
  patchSize?: number;
  stride?: number;
  scales?: number;
  scaleFactor?: number;
  maxPatches?: number;
  /** solve each scale with the exact assignment solver instead of Sinkhorn */
  exact?: boolean;
}

export interface PatchScaleReport {
  scale: number;
  genCount: number;
  realCount: number;
  /** patch pairs actually transported at this scale */
  used: number;
  cost: number | null;
  converged: boolean;
  skipped: boolean;
}

export interface PatchWResult {
  value: number;
  scales: PatchScaleReport[];
  /** indices of scales skipped for having too few patches */
  skippedScales: number[];
  converged: boolean;
  /** per generated image d(value)/d(pixel), each shape [h, w] */
  grads: ArrayView[];
}

/** Multiscale Wasserstein patch loss between generated and real image sets. */
export async function boundPatchWLoss(
  gen: GenImage[],
  real: ArrayView[],
  opts: PatchWOptions = {},
): Promise<PatchWResult> {
  if (gen.length === 0) throw new Error("gen: needs at least one image");
  if (real.length === 0) throw new Error("real: needs at least one image");
  for (let i = 0; i < gen.length; i++) {
    checkView(`gen[${i}].image`, gen[i].image, { dims: 2 });
    const mask = gen[i].mask;
    if (mask !== undefined) {
      checkView(`gen[${i}].mask`, mask, { dims: 2 });
      if (mask.shape[0] !== gen[i].image.shape[0] || mask.shape[1] !== gen[i].image.shape[1]) {
        throw new Error(
          `gen[${i}].mask: shape [${mask.shape.join(", ")}] does not match its image shape ` +
            `[${gen[i].image.shape.join(", ")}]`,
        );
      }
    }
  }
  for (let i = 0; i < real.length; i++) checkView(`real[${i}]`, real[i], { dims: 2 });

  return withTmpDir(async (dir) => {
    const args = ["loss", "patch-w"];
    const anyMask = gen.some((g) => g.mask !== undefined);
    for (let i = 0; i < gen.length; i++) {
      const imgPath = join(dir, `gen_${i}.pgm`);
      await writeFile(imgPath, encodeImagePgm(gen[i].image, `gen[${i}].image`));
      args.push("--gen", imgPath);
      if (anyMask) {
        const mask = gen[i].mask;
        if (mask === undefined) {
          args.push("--gen-mask", "-");
        } else {
          const maskPath = join(dir, `gen_${i}_mask.pgm`);
          await writeFile(maskPath, encodeMaskPgm(mask, `gen[${i}].mask`));
          args.push("--gen-mask", maskPath);
        }
      }
    }
    for (let i = 0; i < real.length; i++) {
      const path = join(dir, `real_${i}.pgm`);
      await writeFile(path, encodeImagePgm(real[i], `real[${i}]`));
      args.push("--real", path);
    }
    args.push(
      ...numberFlags([
        ["--seed", opts.seed],
        ["--patch-size", opts.patchSize],
        ["--stride", opts.stride],
        ["--scales", opts.scales],
        ["--scale-factor", opts.scaleFactor],
        ["--max-patches", opts.maxPatches],
      ]),
      ...booleanFlag("--exact", opts.exact),
      ...sinkhornFlags(opts),
      "--with-grads",
    );
    const { doc } = await runCli(args);
    const r = doc.result;
    const scales = (r.scales as Array<Record<string, unknown>>).map((s) => ({
      scale: s.scale as number,
      genCount: s.gen_count as number,
      realCount: s.real_count as number,
      used: s.used as number,
      cost: s.cost as number | null,
      converged: s.converged as boolean,
      skipped: s.skipped as boolean,
    }));
    return {
      value: r.value as number,
      scales,
      skippedScales: r.skipped_scales as number[],
      converged: r.converged as boolean,
      grads: (r.grads as unknown[]).map(decodeView),
    };
  });
}

export interface RegionProfile {
  name: string;
  /** region class id (as a string key) to target temperature in Celsius */
  celsius: Record<string, number>;
}

export interface RegionOptions {
  /** "cold", "warm", a profile JSON path, or an inline profile object */
  profile?: string | RegionProfile;
  includeBackground?: boolean;
}

export interface RegionResult {
  value: number;
  /** d(value)/d(pixel), shape [h, w] */
  grads: ArrayView;
}

/** Region temperature regularizer: mass-weighted squared deviation of per-class means. */
export async function boundRegionReg(
  image: ArrayView,
  mask: ArrayView,
  opts: RegionOptions = {},
): Promise<RegionResult> {
  checkView("image", image, { dims: 2 });
  checkView("mask", mask, { dims: 2 });
  if (mask.shape[0] !== image.shape[0] || mask.shape[1] !== image.shape[1]) {
    throw new Error(
      `mask: shape [${mask.shape.join(", ")}] does not match image shape ` +
        `[${image.shape.join(", ")}]`,
    );
  }
  return withTmpDir(async (dir) => {
    const imgPath = join(dir, "image.pgm");
    await writeFile(imgPath, encodeImagePgm(image, "image"));
    const maskPath = join(dir, "mask.pgm");
    await writeFile(maskPath, encodeMaskPgm(mask, "mask"));
    const args = ["loss", "region", "--image", imgPath, "--mask", maskPath, "--with-grads"];
    if (typeof opts.profile === "string") {
      args.push("--profile", opts.profile);
    } else if (opts.profile !== undefined) {
      args.push("--profile", await writeJson(dir, "profile.json", opts.profile));
    }
    args.push(...booleanFlag("--include-background", opts.includeBackground));
    const { doc } = await runCli(args);
    return {
      value: doc.result.value as number,
      grads: decodeView(doc.result.grads),
    };
  });
}

export interface NllOptions {
  /** variance clip floor */
  epsilon?: number;
}

export interface NllResult {
  value: number;
  /** d(value)/d(mu), shape [L, 2] */
  gradMu: ArrayView;
  /** d(value)/d(sigma2), shape [L] */
  gradSigma2: ArrayView;
}

/** Summed per-landmark Gaussian negative log-likelihood with gradients. */
export async function boundGaussianNll(
  mu: ArrayView,
  sigma2: ArrayView,
  gt: ArrayView,
  opts: NllOptions = {},
): Promise<NllResult> {
  checkView("mu", mu, { dims: 2, lastDim: 2 });
  checkView("gt", gt, { dims: 2, lastDim: 2 });
  checkView("sigma2", sigma2, { dims: 1 });
  if (gt.shape[0] !== mu.shape[0]) {
    throw new Error(`gt: landmark count ${gt.shape[0]} does not match mu count ${mu.shape[0]}`);
  }
  if (sigma2.shape[0] !== mu.shape[0]) {
    throw new Error(
      `sigma2: variance count ${sigma2.shape[0]} does not match mu count ${mu.shape[0]}`,
    );
  }
  return withTmpDir(async (dir) => {
    const muPath = await writeJson(dir, "mu.json", landmarksJson(mu));
    const gtPath = await writeJson(dir, "gt.json", landmarksJson(gt));
    const s2Path = await writeJson(dir, "sigma2.json", toNested(sigma2));
    const { doc } = await runCli([
      "landmarks",
      "nll",
      "--mu",
      muPath,
      "--gt",
      gtPath,
      "--sigma2",
      s2Path,
      ...numberFlags([["--epsilon", opts.epsilon]]),
    ]);
    return {
      value: doc.result.value as number,
      gradMu: decodeView(doc.result.grad_mu),
      gradSigma2: decodeView(doc.result.grad_sigma2),
    };
  });
}

export interface AdapterApplyResult {
  /** adapted landmarks, shape [M, 2] */
  points: ArrayView;
  conventionSize: number;
}

/** Run a trained convention adapter over one landmark set. */
export async function boundAdapterApply(
  modelPath: string,
  pred: ArrayView,
  resize: number,
): Promise<AdapterApplyResult> {
  if (typeof modelPath !== "string" || modelPath.length === 0) {
    throw new Error("modelPath: expected a non-empty path");
  }
  checkView("pred", pred, { dims: 2, lastDim: 2 });
  if (typeof resize !== "number" || !Number.isFinite(resize)) {
    throw new Error(`resize: expected a finite number, got ${String(resize)}`);
  }
  return withTmpDir(async (dir) => {
    const predPath = await writeJson(dir, "pred.json", landmarksJson(pred));
    const { doc } = await runCli([
      "adapt",
      "apply",
      "--model",
      modelPath,
      "--pred",
      predPath,
      "--resize",
      String(resize),
    ]);
    const adapted = doc.result.adapted as Record<string, unknown>;
    return {
      points: decodeView(adapted.points),
      conventionSize: adapted.convention_size as number,
    };
  });
}
