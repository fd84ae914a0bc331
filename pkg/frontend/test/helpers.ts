import { mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { expect } from "vitest";

import { ArrayView, view } from "../src/arrayview.js";

/** Small deterministic PRNG so test inputs are stable across runs. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randUnitImage(rand: () => number, h: number, w: number): ArrayView {
  const data = new Float64Array(h * w);
  for (let i = 0; i < data.length; i++) data[i] = rand();
  return view([h, w], data);
}

export function randMask(rand: () => number, h: number, w: number, maxClass: number): ArrayView {
  const data = new Float64Array(h * w);
  for (let i = 0; i < data.length; i++) data[i] = Math.floor(rand() * (maxClass + 1));
  return view([h, w], data);
}

export function randPoints(rand: () => number, n: number, lo: number, hi: number): ArrayView {
  const data = new Float64Array(n * 2);
  for (let i = 0; i < data.length; i++) data[i] = lo + (hi - lo) * rand();
  return view([n, 2], data);
}

export interface Snapshot {
  shape: number[];
  data: Float64Array;
}

export function snapshot(v: ArrayView): Snapshot {
  return { shape: [...v.shape], data: new Float64Array(v.data) };
}

export function expectUnchanged(name: string, v: ArrayView, snap: Snapshot): void {
  expect([...v.shape], `${name} shape`).toEqual(snap.shape);
  for (let i = 0; i < snap.data.length; i++) {
    if (!Object.is(v.data[i], snap.data[i])) {
      throw new Error(`${name} buffer changed at flat index ${i}`);
    }
  }
  expect(v.data.length).toBe(snap.data.length);
}

/** Full 18-class temperature table, defaulting every class to 30 C. */
export function fullCelsius(overrides: Record<number, number> = {}): Record<string, number> {
  const out: Record<string, number> = {};
  for (let i = 0; i < 18; i++) out[String(i)] = overrides[i] ?? 30.0;
  return out;
}

export async function withDir<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "frontend-test-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

/** Little-endian f64 adapter model file with the given layer widths. */
export function adapterModelBytes(widths: number[], params: number[]): Buffer {
  const header = JSON.stringify({ format: "adapter-mlp", version: 1, widths });
  const blob = Buffer.alloc(params.length * 8);
  params.forEach((p, i) => blob.writeDoubleLE(p, i * 8));
  return Buffer.concat([Buffer.from(header + "\n", "utf-8"), blob]);
}
