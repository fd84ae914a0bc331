export { ArrayView, ViewSpec, checkView, fromNested, product, toNested, view } from "./arrayview.js";
export {
  IMAGE_MAXVAL,
  MASK_MAXVAL,
  NUM_REGION_CLASSES,
  encodeImagePgm,
  encodeMaskPgm,
} from "./pgm.js";
export { CliDocument, CliError, runCli } from "./runner.js";
export {
  AdapterApplyResult,
  GenImage,
  NllOptions,
  NllResult,
  PatchScaleReport,
  PatchWOptions,
  PatchWResult,
  RegionOptions,
  RegionProfile,
  RegionResult,
  SinkhornOptions,
  SinkhornResult,
  boundAdapterApply,
  boundGaussianNll,
  boundPatchWLoss,
  boundRegionReg,
  boundSinkhorn,
} from "./kernels.js";
