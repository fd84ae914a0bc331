/**
 * Binary PGM (P5) writers matching the CLI's on-disk image contract:
 * 16-bit big-endian samples for unit-range images (pixel k encodes
 * k / 65535, nearest quantization with ties to even), 8-bit samples for
 * segmentation masks (one label per pixel, 0 is background).
 */

import { ArrayView, checkView } from "./arrayview.js";

export const IMAGE_MAXVAL = 65535;
export const MASK_MAXVAL = 255;
export const NUM_REGION_CLASSES = 18;

/** Round half to even, as the CLI's writer does. */
function rint(x: number): number {
  const f = Math.floor(x);
  const frac = x - f;
  if (frac > 0.5) return f + 1;
  if (frac < 0.5) return f;
  return f % 2 === 0 ? f : f + 1;
}

export function encodeImagePgm(img: ArrayView, name = "image"): Buffer {
  checkView(name, img, { dims: 2 });
  const [h, w] = img.shape;
  if (h === 0 || w === 0) throw new Error(`${name}: empty image`);
  const header = Buffer.from(`P5\n${w} ${h}\n${IMAGE_MAXVAL}\n`, "ascii");
  const body = Buffer.alloc(h * w * 2);
  for (let i = 0; i < h * w; i++) {
    const v = img.data[i];
    if (!(v >= 0 && v <= 1)) {
      throw new Error(`${name}: value ${v} at flat index ${i} outside the unit interval`);
    }
    body.writeUInt16BE(rint(v * IMAGE_MAXVAL), i * 2);
  }
  return Buffer.concat([header, body]);
}

export function encodeMaskPgm(mask: ArrayView, name = "mask"): Buffer {
  checkView(name, mask, { dims: 2 });
  const [h, w] = mask.shape;
  if (h === 0 || w === 0) throw new Error(`${name}: empty mask`);
  const header = Buffer.from(`P5\n${w} ${h}\n${MASK_MAXVAL}\n`, "ascii");
  const body = Buffer.alloc(h * w);
  for (let i = 0; i < h * w; i++) {
    const v = mask.data[i];
    if (!Number.isInteger(v) || v < 0 || v >= NUM_REGION_CLASSES) {
      throw new Error(
        `${name}: label ${v} at flat index ${i} is not an integer in [0, ${NUM_REGION_CLASSES - 1}]`,
      );
    }
    body.writeUInt8(v, i);
  }
  return Buffer.concat([header, body]);
}
