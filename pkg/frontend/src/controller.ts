// Editing behaviour over the wire protocol: debounced didChange
// round-trips, hole completion, selection sync between the buffer and
// the AST snapshot, and the panel actions.  Every semantic answer comes
// from the server; this layer only splices text, tracks versions and
// clamps ranges.

import { Client } from "./client.js";
import {
  AstResult,
  CompletionItem,
  Diagnostic,
  Hole,
  RelatedLocation,
  SearchHit,
  ServerError,
  Span,
  TreeNode,
  PROTOCOL_VERSION,
} from "./protocol.js";
import {
  EditorState,
  applyDocState,
  clampSpan,
  emptyState,
  findByPath,
  holesRightToLeft,
  sliceSpan,
  spliceRange,
  toggleFold,
  treeForSlot,
  visibleRows,
  TreeRow,
} from "./state.js";

export interface HintItem {
  label: string;
  insertText: string;
  remainingGoals: number;
  /** The hole's span; applying the hint replaces exactly this range. */
  targetRange: Span;
  /** Document version the hint was computed against. */
  version: number;
}

export interface Scheduler {
  /** Runs fn after ms; the returned thunk cancels the pending run. */
  schedule(fn: () => void, ms: number): () => void;
}

export const timeoutScheduler: Scheduler = {
  schedule(fn, ms) {
    const id = setTimeout(fn, ms);
    return () => clearTimeout(id);
  },
};

/** Runs scheduled work immediately; keeps tests free of real timers. */
export const immediateScheduler: Scheduler = {
  schedule(fn) {
    let cancelled = false;
    queueMicrotask(() => {
      if (!cancelled) fn();
    });
    return () => {
      cancelled = true;
    };
  },
};

export const DEBOUNCE_MS = 150;

export interface AstSelection {
  slot: string;
  path: string;
  node: TreeNode | null;
}

export class EditorController {
  readonly client: Client;
  state: EditorState;
  /** Selected AST node, kept in step with the editor selection. */
  astSelection: AstSelection | null = null;
  showInferred = false;
  folded = new Map<string, Set<string>>();
  lastError: string | null = null;
  serverMethods: string[] = [];

  private readonly scheduler: Scheduler;
  private readonly debounceMs: number;
  private cancelTimer: (() => void) | null = null;
  // didChange round-trips are chained: at most one in flight, newer
  // edits coalesce into the next send.
  private chain: Promise<void> = Promise.resolve();
  private lastSyncedText: string | null = null;
  private listeners: (() => void)[] = [];

  constructor(client: Client, opts?: { scheduler?: Scheduler; debounceMs?: number }) {
    this.client = client;
    this.scheduler = opts?.scheduler ?? timeoutScheduler;
    this.debounceMs = opts?.debounceMs ?? DEBOUNCE_MS;
    this.state = emptyState("");
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  private fail(e: unknown): null {
    if (e instanceof ServerError) {
      this.lastError = `${e.code}: ${e.message}`;
      this.notify();
      return null;
    }
    throw e;
  }

  // --- session ----------------------------------------------------------------

  async connect(): Promise<void> {
    const init = await this.client.initialize();
    if (init.protocolVersion !== PROTOCOL_VERSION) {
      throw new Error(
        `protocol mismatch: server speaks ${init.protocolVersion}, client ${PROTOCOL_VERSION}`,
      );
    }
    this.serverMethods = init.methods;
  }

  /**
   * Opens a document.  With text the buffer is authoritative; without,
   * the server loads the project source and the AST panel carries the
   * content (the protocol has no raw-text read-back).
   */
  async open(uri: string, text?: string): Promise<void> {
    const version = this.state.uri === uri ? this.state.version + 1 : 1;
    const doc = await this.client.didOpen(uri, text, version);
    this.state = applyDocState(emptyState(uri), doc, text ?? "");
    this.lastSyncedText = this.state.text;
    this.astSelection = null;
    await this.refreshAst();
    this.notify();
  }

  /** Re-opens with the current buffer after a version conflict. */
  private async refreshOpen(): Promise<void> {
    const text = this.state.text;
    const doc = await this.client.didOpen(this.state.uri, text, this.state.version + 1);
    this.state = applyDocState(this.state, doc, text);
    this.lastSyncedText = text;
    await this.refreshAst();
    this.notify();
  }

  // --- edits ------------------------------------------------------------------

  /** Keystroke path: buffer updates now, the wire round-trip is debounced. */
  typed(text: string): void {
    this.state = { ...this.state, text };
    this.cancelTimer?.();
    this.cancelTimer = this.scheduler.schedule(() => {
      this.cancelTimer = null;
      void this.flush();
    }, this.debounceMs);
    this.notify();
  }

  /** Pushes any unsent buffer text and waits for the round-trip. */
  async flush(): Promise<void> {
    this.cancelTimer?.();
    this.cancelTimer = null;
    this.chain = this.chain.then(() => this.sendIfDirty());
    await this.chain;
  }

  private async sendIfDirty(): Promise<void> {
    if (this.state.text === this.lastSyncedText) return;
    const text = this.state.text;
    try {
      const doc = await this.client.didChange(this.state.uri, this.state.version + 1, text);
      this.lastSyncedText = text;
      // keep the (possibly newer) local buffer; apply server bookkeeping
      this.state = applyDocState(this.state, doc, this.state.text);
      this.notify();
    } catch (e) {
      if (e instanceof ServerError && e.code === "StaleVersion") {
        await this.refreshOpen();
        return;
      }
      throw e;
    }
  }

  // --- holes and hints ----------------------------------------------------------

  holes(): Hole[] {
    return holesRightToLeft(this.state.holes);
  }

  /** Click on a `⟨…⟩` goal: completions at its start offset. */
  async hintsAt(hole: Hole): Promise<HintItem[]> {
    await this.flush();
    const r = await this.client.completionsAt(this.state.uri, hole.range[0]);
    return r.items
      .filter((i): i is CompletionItem & { remainingGoals: number } => i.kind === "hint")
      .map((i) => ({
        label: i.label,
        insertText: i.insertText,
        remainingGoals: i.remainingGoals,
        targetRange: i.range ?? hole.range,
        version: r.version,
      }));
  }

  async scopeCompletionsAt(offset: number): Promise<CompletionItem[]> {
    await this.flush();
    const r = await this.client.completionsAt(this.state.uri, offset);
    return r.items.filter((i) => i.kind === "scope");
  }

  /**
   * Replaces the hint's hole with its insertion text and synchronises.
   * Returns false (after refreshing) when the hint no longer matches
   * the buffer version it was computed for.
   */
  async applyHint(item: HintItem): Promise<boolean> {
    await this.flush();
    if (item.version !== this.state.version) {
      this.lastError = `hint for version ${item.version} is stale (buffer is at ${this.state.version})`;
      await this.refreshOpen();
      return false;
    }
    this.state = {
      ...this.state,
      text: spliceRange(this.state.text, item.targetRange, item.insertText),
    };
    await this.flush();
    await this.refreshAst();
    this.notify();
    return true;
  }

  // --- selection sync -----------------------------------------------------------

  async refreshAst(): Promise<void> {
    this.state = { ...this.state, ast: await this.client.astOf(this.state.uri) };
    this.notify();
  }

  private locate(slot: string, path: string): TreeNode | null {
    const ast = this.state.ast;
    if (ast === null) return null;
    const tree = treeForSlot(ast, slot);
    return tree === null ? null : findByPath(tree, path);
  }

  /**
   * editor→ast: asks the server for the subterm at the span, selects its
   * source range and highlights the matching AST node.  A stale snapshot
   * is re-fetched and the lookup retried once.
   */
  async syncSelectionFromEditor(span: Span): Promise<AstSelection | null> {
    try {
      const r = await this.client.subtermAt(this.state.uri, span);
      if (r.slot === null || r.path === null) {
        this.astSelection = null;
        this.state = { ...this.state, selection: null };
        this.notify();
        return null;
      }
      const selection = r.range ?? span;
      let node = this.locate(r.slot, r.path);
      if (node === null || this.state.ast?.version !== r.version) {
        await this.refreshAst();
        node = this.locate(r.slot, r.path);
      }
      this.astSelection = { slot: r.slot, path: r.path, node };
      this.state = {
        ...this.state,
        selection: clampSpan(selection, Array.from(this.state.text).length),
      };
      this.notify();
      return this.astSelection;
    } catch (e) {
      return this.fail(e);
    }
  }

  /** Double-click: smallest subterm containing the clicked codepoint. */
  async selectSmallestAt(offset: number): Promise<AstSelection | null> {
    return this.syncSelectionFromEditor([offset, offset + 1]);
  }

  /** ast→editor: selecting a tree node selects its span in the buffer. */
  selectAstNode(slot: string, node: TreeNode): Span | null {
    this.astSelection = { slot, path: node.path, node };
    if (node.range === null) {
      this.notify();
      return null;
    }
    const span = clampSpan(node.range, Array.from(this.state.text).length);
    this.state = { ...this.state, selection: span };
    this.notify();
    return span;
  }

  // --- panels ---------------------------------------------------------------------

  /** Error-list click: the ill-typed subterm the server reports. */
  async clickError(d: Diagnostic): Promise<Span | null> {
    if (d.range === null) return null;
    try {
      const r = await this.client.subtermAt(this.state.uri, d.range);
      const span = r.range ?? d.range;
      const sel = clampSpan(span, Array.from(this.state.text).length);
      this.state = { ...this.state, selection: sel };
      if (r.slot !== null && r.path !== null) {
        this.astSelection = { slot: r.slot, path: r.path, node: this.locate(r.slot, r.path) };
      }
      this.notify();
      return sel;
    } catch (e) {
      return this.fail(e);
    }
  }

  async hover(offset: number): Promise<string | null> {
    try {
      const r = await this.client.typeAt(this.state.uri, offset);
      return r.type;
    } catch (e) {
      return this.fail(e);
    }
  }

  async gotoDefinition(offset: number): Promise<RelatedLocation | null> {
    try {
      const r = await this.client.definitionAt(this.state.uri, offset);
      const loc = { name: r.name, ...r.location };
      await this.reveal(loc.uri, loc.range);
      return loc;
    } catch (e) {
      return this.fail(e);
    }
  }

  /** Relation bar: one navigation button per related declaration. */
  async relationButtons(
    offset: number,
    relation = "inverse(RefersTo)",
  ): Promise<RelatedLocation[] | null> {
    try {
      const r = await this.client.related(this.state.uri, offset, relation);
      return r.locations;
    } catch (e) {
      return this.fail(e);
    }
  }

  async runSearch(query: string): Promise<SearchHit[] | null> {
    try {
      const r = await this.client.search(query, this.state.uri || undefined);
      return r.hits;
    } catch (e) {
      return this.fail(e);
    }
  }

  /** Search-hit click: open the containing file and select the match. */
  async openHit(hit: SearchHit): Promise<void> {
    if (hit.uri !== null && hit.uri !== this.state.uri) {
      await this.reveal(hit.uri, hit.range);
      return;
    }
    if (hit.range !== null) {
      await this.syncSelectionFromEditor(hit.range);
    }
  }

  /**
   * Cross-file navigation: queue an openLocation notification for any
   * attached editor, then bring the file into this session (without
   * text: the server loads the project source, the AST panel shows it).
   */
  async reveal(uri: string, range: Span | null): Promise<void> {
    await this.client.openLocation(uri, range);
    if (uri !== this.state.uri) {
      await this.open(uri);
    }
    if (range !== null) {
      await this.syncSelectionFromEditor(range);
    }
  }

  async drainNotifications(): Promise<void> {
    const ns = await this.client.pollNotifications();
    for (const n of ns) {
      if (n.method === "openLocation" && n.params.uri !== this.state.uri) {
        await this.open(n.params.uri);
      }
      if (n.method === "openLocation" && n.params.range !== null) {
        await this.syncSelectionFromEditor(n.params.range);
      }
    }
  }

  // --- rendered view ----------------------------------------------------------------

  toggleInferred(): void {
    this.showInferred = !this.showInferred;
    this.notify();
  }

  toggleFoldAt(slot: string, path: string): void {
    this.folded.set(slot, toggleFold(this.folded.get(slot) ?? new Set(), path));
    this.notify();
  }

  rowsFor(slot: string): TreeRow[] {
    const ast = this.state.ast;
    if (ast === null) return [];
    const tree = treeForSlot(ast, slot);
    if (tree === null) return [];
    return visibleRows(tree, {
      showInferred: this.showInferred,
      folded: this.folded.get(slot) ?? new Set(),
    });
  }

  selectionText(): string {
    return this.state.selection === null ? "" : sliceSpan(this.state.text, this.state.selection);
  }
}
