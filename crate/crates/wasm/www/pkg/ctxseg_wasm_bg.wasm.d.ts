/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_maskprompts_free: (a: number, b: number) => void;
export const __wbg_toydemo_free: (a: number, b: number) => void;
export const maskPrompts: (a: number, b: number, c: number, d: number) => [number, number, number];
export const maskprompts_boundingBox: (a: number) => [number, number];
export const maskprompts_clickCol: (a: number) => number;
export const maskprompts_clickRow: (a: number) => number;
export const maskprompts_negativeScribble: (a: number) => [number, number];
export const maskprompts_positiveScribble: (a: number) => [number, number];
export const segmentEdges: (a: number, b: number, c: number, d: number) => [number, number];
export const superpixels: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const toydemo_dice: (a: number, b: number, c: number) => [number, number, number];
export const toydemo_hasModel: (a: number) => number;
export const toydemo_image: (a: number, b: number) => [number, number];
export const toydemo_label: (a: number, b: number) => [number, number];
export const toydemo_loadCheckpoint: (a: number, b: number, c: number) => [number, number];
export const toydemo_new: (a: number, b: number) => number;
export const toydemo_predict: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const toydemo_resolution: (a: number) => number;
export const toydemo_setFamily: (a: number, b: number) => void;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
