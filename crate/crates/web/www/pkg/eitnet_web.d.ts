/* tslint:disable */
/* eslint-disable */

/**
 * Similarity alignment of one skeleton onto another.
 */
export class Alignment {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * The predicted joints after the transform, flattened `x, y, z` triples.
     */
    readonly aligned: Float64Array;
    /**
     * Mean joint distance before alignment.
     */
    readonly mpjpe: number;
    /**
     * Mean joint distance after alignment.
     */
    readonly pa_mpjpe: number;
    /**
     * Row-major 3x3.
     */
    readonly rotation: Float64Array;
    readonly scale: number;
    readonly translation: Float64Array;
}

/**
 * Aligns `pred` onto `truth`; both are flattened `x, y, z` joint triples.
 */
export function align_skeletons(pred: Float64Array, truth: Float64Array): Alignment;

/**
 * Edge-replicated k x k median filter over a row-major 8-bit frame.
 */
export function median_filter(pixels: Uint8Array, height: number, width: number, k: number): Uint8Array;

/**
 * Synthetic camera frame: a bright square in the quadrant of `class` with
 * salt-and-pepper noise at rate `noise`.
 */
export function noisy_frame(_class: number, height: number, width: number, noise: number, seed: bigint): Uint8Array;

/**
 * Runs the deterministic multi-camera stream simulation and returns its CSV
 * report (per-camera counts, latency and one row per sync window).
 */
export function simulate_streams(cameras: number, duration_ms: number, jitter_us: number, drop_probability: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_alignment_free: (a: number, b: number) => void;
    readonly align_skeletons: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly alignment_aligned: (a: number) => [number, number];
    readonly alignment_mpjpe: (a: number) => number;
    readonly alignment_pa_mpjpe: (a: number) => number;
    readonly alignment_rotation: (a: number) => [number, number];
    readonly alignment_scale: (a: number) => number;
    readonly alignment_translation: (a: number) => [number, number];
    readonly median_filter: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly noisy_frame: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly simulate_streams: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
