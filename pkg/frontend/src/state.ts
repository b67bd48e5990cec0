// Client-side bookkeeping for one open document.  Everything here is
// range and display arithmetic: the text buffer, clamped diagnostic
// spans, hole markers, gutter aggregation and AST display walks.  No
// parsing, typing or notation logic lives on this side of the wire.

import {
  AstResult,
  Diagnostic,
  DocState,
  Hole,
  Span,
  TreeNode,
} from "./protocol.js";

export interface EditorState {
  uri: string;
  /** Version of the last server response applied to this state. */
  version: number;
  text: string;
  diagnostics: Diagnostic[];
  holes: Hole[];
  /** Last AST snapshot; its version may lag behind `version`. */
  ast: AstResult | null;
  selection: Span | null;
}

export function emptyState(uri: string): EditorState {
  return {
    uri,
    version: 0,
    text: "",
    diagnostics: [],
    holes: [],
    ast: null,
    selection: null,
  };
}

export function clampSpan(span: Span, length: number): Span {
  const start = Math.max(0, Math.min(span[0], length));
  const end = Math.max(start, Math.min(span[1], length));
  return [start, end];
}

export function clampDiagnostics(diagnostics: Diagnostic[], length: number): Diagnostic[] {
  return diagnostics.map((d) => ({
    ...d,
    range: d.range === null ? null : clampSpan(d.range, length),
  }));
}

/** Folds a didOpen/didChange response into the state. */
export function applyDocState(state: EditorState, doc: DocState, text: string): EditorState {
  return {
    ...state,
    uri: doc.uri,
    version: doc.version,
    text,
    diagnostics: clampDiagnostics(doc.diagnostics, text.length),
    holes: doc.holes,
  };
}

/** Replaces exactly `span` in `text`; spans are codepoint-based. */
export function spliceRange(text: string, span: Span, insert: string): string {
  const cps = Array.from(text);
  const [start, end] = clampSpan(span, cps.length);
  return cps.slice(0, start).join("") + insert + cps.slice(end).join("");
}

export function sliceSpan(text: string, span: Span): string {
  const cps = Array.from(text);
  const [start, end] = clampSpan(span, cps.length);
  return cps.slice(start, end).join("");
}

export function holeAt(state: EditorState, offset: number): Hole | null {
  for (const h of state.holes) {
    if (h.range[0] <= offset && offset <= h.range[1]) return h;
  }
  return null;
}

/** Rightmost hole first: completing back-to-front keeps earlier spans valid. */
export function holesRightToLeft(holes: Hole[]): Hole[] {
  return [...holes].sort((a, b) => b.range[0] - a.range[0]);
}

// --- gutter -------------------------------------------------------------------

export interface GutterMark {
  line: number;
  severity: string;
  messages: string[];
}

const SEVERITY_RANK: Record<string, number> = { error: 0, warning: 1, info: 2 };

function rank(severity: string): number {
  return SEVERITY_RANK[severity] ?? 3;
}

/** Codepoint offsets at which each line starts. */
export function lineStarts(text: string): number[] {
  const starts = [0];
  let offset = 0;
  for (const cp of text) {
    offset += 1;
    if (cp === "\n") starts.push(offset);
  }
  return starts;
}

export function offsetToLine(starts: number[], offset: number): number {
  let lo = 0;
  let hi = starts.length - 1;
  while (lo < hi) {
    const mid = (lo + hi + 1) >> 1;
    if (starts[mid]! <= offset) lo = mid;
    else hi = mid - 1;
  }
  return lo;
}

/**
 * One mark per line that has diagnostics: the worst severity wins the
 * icon, every message on the line goes into the hover list.
 */
export function gutterMarks(text: string, diagnostics: Diagnostic[]): GutterMark[] {
  const starts = lineStarts(text);
  const byLine = new Map<number, Diagnostic[]>();
  for (const d of diagnostics) {
    const line = d.range === null ? 0 : offsetToLine(starts, d.range[0]);
    const bucket = byLine.get(line);
    if (bucket) bucket.push(d);
    else byLine.set(line, [d]);
  }
  const marks: GutterMark[] = [];
  for (const [line, ds] of byLine) {
    const worst = ds.reduce((a, b) => (rank(b.severity) < rank(a.severity) ? b : a));
    marks.push({
      line,
      severity: worst.severity,
      messages: ds.map((d) => d.message),
    });
  }
  marks.sort((a, b) => a.line - b.line);
  return marks;
}

// --- AST display walk ---------------------------------------------------------

export interface TreeRow {
  label: string;
  depth: number;
  path: string;
  range: Span | null;
  inferred: boolean;
  folded: boolean;
  hasChildren: boolean;
}

export interface TreeViewOptions {
  showInferred: boolean;
  folded: ReadonlySet<string>;
}

/**
 * Flattens a server term tree into display rows honouring the inferred
 * toggle and per-path folding.  A folded node stays visible; its
 * subtree does not.
 */
export function visibleRows(tree: TreeNode, opts: TreeViewOptions): TreeRow[] {
  const rows: TreeRow[] = [];
  const walk = (node: TreeNode, depth: number) => {
    if (node.inferred && !opts.showInferred) return;
    const folded = opts.folded.has(node.path);
    rows.push({
      label: node.label,
      depth,
      path: node.path,
      range: node.range,
      inferred: node.inferred,
      folded,
      hasChildren: node.children.length > 0,
    });
    if (!folded) {
      for (const child of node.children) walk(child, depth + 1);
    }
  };
  walk(tree, 0);
  return rows;
}

export function findByPath(tree: TreeNode, path: string): TreeNode | null {
  if (tree.path === path) return tree;
  for (const child of tree.children) {
    const hit = findByPath(child, path);
    if (hit !== null) return hit;
  }
  return null;
}

/** Locates the component tree holding `slot` in an AST snapshot. */
export function treeForSlot(ast: AstResult, slot: string): TreeNode | null {
  for (const th of ast.theories) {
    for (const c of th.constants) {
      for (const comp of c.components) {
        if (comp.slot === slot) return comp.tree;
      }
    }
  }
  return null;
}

export function toggleFold(folded: ReadonlySet<string>, path: string): Set<string> {
  const next = new Set(folded);
  if (next.has(path)) next.delete(path);
  else next.add(path);
  return next;
}
