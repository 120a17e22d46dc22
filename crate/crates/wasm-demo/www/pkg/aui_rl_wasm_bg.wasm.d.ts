/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_domain: (a: number) => [number, number];
export const demo_landscape: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_new: () => [number, number, number];
export const demo_trace: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_train: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_ui_count: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
