/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_alignment_free: (a: number, b: number) => void;
export const align_skeletons: (a: number, b: number, c: number, d: number) => [number, number, number];
export const alignment_aligned: (a: number) => [number, number];
export const alignment_mpjpe: (a: number) => number;
export const alignment_pa_mpjpe: (a: number) => number;
export const alignment_rotation: (a: number) => [number, number];
export const alignment_scale: (a: number) => number;
export const alignment_translation: (a: number) => [number, number];
export const median_filter: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const noisy_frame: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const simulate_streams: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
