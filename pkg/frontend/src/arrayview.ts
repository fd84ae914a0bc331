/**
 * Caller-owned array views: a contiguous row-major float64 buffer plus an
 * explicit shape. Views are borrowed for the duration of a single call and
 * never retained or written to by this package.
 */

export interface ArrayView {
  readonly shape: readonly number[];
  readonly data: Float64Array;
}

/** Build a view, copying plain number arrays into a fresh buffer. */
export function view(shape: readonly number[], data: Float64Array | readonly number[]): ArrayView {
  const buf = data instanceof Float64Array ? data : Float64Array.from(data);
  return { shape: [...shape], data: buf };
}

export function product(shape: readonly number[]): number {
  let p = 1;
  for (const s of shape) p *= s;
  return p;
}

export interface ViewSpec {
  /** required number of dimensions */
  dims?: number;
  /** required extent of the final dimension */
  lastDim?: number;
}

/**
 * Validate a view against its invariants, throwing errors that name the
 * offending argument. Checks shape/buffer agreement, dimensionality, and
 * finiteness of every element.
 */
export function checkView(name: string, v: ArrayView, spec: ViewSpec = {}): void {
  if (!v || !(v.data instanceof Float64Array) || !Array.isArray([...v.shape])) {
    throw new Error(`${name}: expected an ArrayView with a Float64Array buffer`);
  }
  for (const s of v.shape) {
    if (!Number.isInteger(s) || s < 0) {
      throw new Error(`${name}: shape [${v.shape.join(", ")}] has a non-natural extent`);
    }
  }
  const need = product(v.shape);
  if (need !== v.data.length) {
    throw new Error(
      `${name}: shape [${v.shape.join(", ")}] implies ${need} elements but the buffer holds ${v.data.length}`,
    );
  }
  if (spec.dims !== undefined && v.shape.length !== spec.dims) {
    throw new Error(`${name}: expected a ${spec.dims}-d shape, got [${v.shape.join(", ")}]`);
  }
  if (spec.lastDim !== undefined && v.shape[v.shape.length - 1] !== spec.lastDim) {
    throw new Error(
      `${name}: final dimension must be ${spec.lastDim}, got ${v.shape[v.shape.length - 1]}`,
    );
  }
  for (let i = 0; i < v.data.length; i++) {
    if (!Number.isFinite(v.data[i])) {
      throw new Error(`${name}: non-finite value at flat index ${i}`);
    }
  }
}

/** Nested plain-array form of a view, for JSON serialization. */
export function toNested(v: ArrayView): unknown {
  if (v.shape.length === 0) return v.data[0];
  if (v.shape.length === 1) return Array.from(v.data);
  const rec = (dim: number, offset: number, count: number): unknown => {
    if (dim === v.shape.length - 1) {
      return Array.from(v.data.subarray(offset, offset + v.shape[dim]));
    }
    const childCount = count / v.shape[dim];
    const out: unknown[] = [];
    for (let i = 0; i < v.shape[dim]; i++) {
      out.push(rec(dim + 1, offset + i * childCount, childCount));
    }
    return out;
  };
  return rec(0, 0, v.data.length);
}

/** Flatten a nested numeric array (e.g. a parsed JSON matrix) row-major. */
export function fromNested(nested: unknown): { shape: number[]; data: Float64Array } {
  const shape: number[] = [];
  let probe: unknown = nested;
  while (Array.isArray(probe)) {
    shape.push(probe.length);
    probe = probe[0];
  }
  const flat: number[] = [];
  const walk = (node: unknown, depth: number): void => {
    if (depth === shape.length) {
      if (typeof node !== "number") throw new Error(`expected a number at depth ${depth}`);
      flat.push(node);
      return;
    }
    if (!Array.isArray(node) || node.length !== shape[depth]) {
      throw new Error("ragged nested array");
    }
    for (const child of node) walk(child, depth + 1);
  };
  walk(nested, 0);
  return { shape, data: Float64Array.from(flat) };
}
