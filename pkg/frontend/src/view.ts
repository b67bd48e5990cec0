// Browser bindings: a textarea buffer with a highlight backdrop for
// squiggles and holes, a marker gutter, and the side panels.  All
// content shown here is relayed from server responses; offsets are
// converted between UTF-16 (DOM) and codepoints (protocol) at this
// boundary.

import { EditorController, HintItem } from "./controller.js";
import { Diagnostic, Hole, SearchHit, Span, TreeNode } from "./protocol.js";
import { gutterMarks, sliceSpan } from "./state.js";

export function cpToUtf16(text: string, cp: number): number {
  let units = 0;
  let seen = 0;
  for (const ch of text) {
    if (seen >= cp) break;
    units += ch.length;
    seen += 1;
  }
  return units;
}

export function utf16ToCp(text: string, index: number): number {
  let units = 0;
  let seen = 0;
  for (const ch of text) {
    if (units >= index) break;
    units += ch.length;
    seen += 1;
  }
  return seen;
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

interface Overlay {
  span: Span;
  cls: string;
  title: string;
}

/** Text with <mark> wrappers for diagnostics and holes, for the backdrop. */
export function backdropHtml(text: string, diagnostics: Diagnostic[], holes: Hole[]): string {
  const overlays: Overlay[] = [];
  for (const d of diagnostics) {
    if (d.range !== null) {
      overlays.push({ span: d.range, cls: `squiggle ${d.severity}`, title: d.message });
    }
  }
  for (const h of holes) {
    overlays.push({ span: h.range, cls: "hole", title: h.expected ?? "open goal" });
  }
  overlays.sort((a, b) => a.span[0] - b.span[0] || b.span[1] - a.span[1]);
  const cps = Array.from(text);
  let html = "";
  let pos = 0;
  for (const o of overlays) {
    const [s, e] = o.span;
    if (s < pos) continue; // overlapping marks: first one wins
    html += esc(cps.slice(pos, s).join(""));
    html += `<mark class="${o.cls}" title="${esc(o.title)}">${esc(cps.slice(s, e).join(""))}</mark>`;
    pos = e;
  }
  html += esc(cps.slice(pos).join(""));
  return html + "\n";
}

export interface ViewElements {
  uriInput: HTMLInputElement;
  openButton: HTMLButtonElement;
  textInput: HTMLTextAreaElement;
  gutter: HTMLElement;
  editor: HTMLTextAreaElement;
  backdrop: HTMLElement;
  status: HTMLElement;
  errorList: HTMLElement;
  astPanel: HTMLElement;
  hintPanel: HTMLElement;
  searchInput: HTMLInputElement;
  searchButton: HTMLButtonElement;
  searchResults: HTMLElement;
  relationBar: HTMLElement;
  inferredToggle: HTMLInputElement;
}

export function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

export class View {
  private readonly c: EditorController;
  private readonly el: ViewElements;
  private hoverTimer: number | null = null;

  constructor(controller: EditorController, elements: ViewElements) {
    this.c = controller;
    this.el = elements;
    controller.onChange(() => this.render());
    this.bind();
  }

  private bind(): void {
    const { el, c } = this;

    el.openButton.addEventListener("click", () => {
      const uri = el.uriInput.value.trim();
      if (uri === "") return;
      const text = el.textInput.value;
      void c.open(uri, text !== "" ? text : undefined);
    });

    el.editor.addEventListener("input", () => {
      c.typed(el.editor.value);
    });

    el.editor.addEventListener("mouseup", () => {
      const text = el.editor.value;
      const start = utf16ToCp(text, el.editor.selectionStart);
      const end = utf16ToCp(text, el.editor.selectionEnd);
      const span: Span = end > start ? [start, end] : [start, start + 1];
      const hole = c.state.holes.find((h) => h.range[0] <= start && start <= h.range[1]);
      if (hole !== undefined) {
        void this.showHints(hole);
        return;
      }
      void c.syncSelectionFromEditor(span);
    });

    el.editor.addEventListener("dblclick", () => {
      const start = utf16ToCp(el.editor.value, el.editor.selectionStart);
      void c.selectSmallestAt(start);
    });

    el.editor.addEventListener("mousemove", (ev) => {
      if (this.hoverTimer !== null) window.clearTimeout(this.hoverTimer);
      this.hoverTimer = window.setTimeout(() => {
        void this.hoverAtPoint(ev);
      }, 300);
    });

    el.searchButton.addEventListener("click", () => {
      void this.runSearch();
    });
    el.searchInput.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter") void this.runSearch();
    });

    el.inferredToggle.addEventListener("change", () => {
      c.toggleInferred();
    });
  }

  private async hoverAtPoint(_ev: MouseEvent): Promise<void> {
    const offset = utf16ToCp(this.el.editor.value, this.el.editor.selectionStart);
    const tp = await this.c.hover(offset);
    if (tp !== null) {
      this.el.status.textContent = `: ${tp}`;
    }
  }

  private async showHints(hole: Hole): Promise<void> {
    const hints = await this.c.hintsAt(hole);
    this.renderHints(hole, hints);
  }

  private async runSearch(): Promise<void> {
    const hits = await this.c.runSearch(this.el.searchInput.value);
    if (hits !== null) this.renderSearchHits(hits);
  }

  // --- rendering ----------------------------------------------------------------

  render(): void {
    const { el, c } = this;
    const s = c.state;
    if (el.editor.value !== s.text) {
      el.editor.value = s.text;
    }
    el.backdrop.innerHTML = backdropHtml(s.text, s.diagnostics, s.holes);
    this.renderGutter();
    this.renderErrors();
    this.renderAst();
    if (s.selection !== null) {
      el.editor.setSelectionRange(
        cpToUtf16(s.text, s.selection[0]),
        cpToUtf16(s.text, s.selection[1]),
      );
    }
    el.status.textContent =
      c.lastError !== null
        ? `⚠ ${c.lastError}`
        : `${s.uri || "(no file)"} v${s.version} — ${s.diagnostics.length} problem(s), ${s.holes.length} goal(s)`;
    c.lastError = null;
  }

  private renderGutter(): void {
    const s = this.c.state;
    const lines = s.text === "" ? 1 : s.text.split("\n").length;
    const marks = new Map(gutterMarks(s.text, s.diagnostics).map((m) => [m.line, m]));
    const rows: string[] = [];
    for (let i = 0; i < lines; i++) {
      const m = marks.get(i);
      const icon =
        m === undefined
          ? ""
          : `<span class="mark ${m.severity}" title="${esc(m.messages.join("\n"))}">●</span>`;
      rows.push(`<div class="gutter-line">${icon}${i + 1}</div>`);
    }
    this.el.gutter.innerHTML = rows.join("");
  }

  private renderErrors(): void {
    const s = this.c.state;
    this.el.errorList.innerHTML = "";
    for (const d of s.diagnostics) {
      const li = document.createElement("li");
      li.className = d.severity;
      const where = d.range === null ? "" : ` @ ${d.range[0]}..${d.range[1]}`;
      li.textContent = `${d.severity}${where}: ${d.message}`;
      li.title = d.log.join("\n");
      li.addEventListener("click", () => {
        void this.c.clickError(d);
      });
      this.el.errorList.appendChild(li);
    }
  }

  private renderHints(hole: Hole, hints: HintItem[]): void {
    this.el.hintPanel.innerHTML = "";
    const head = document.createElement("div");
    head.className = "goal";
    head.textContent = `goal: ${hole.expected ?? "?"}`;
    this.el.hintPanel.appendChild(head);
    for (const h of hints) {
      const b = document.createElement("button");
      b.textContent = `${h.label} (${h.remainingGoals} left)`;
      b.title = h.insertText;
      b.addEventListener("click", () => {
        void this.c.applyHint(h).then(() => {
          this.el.hintPanel.innerHTML = "";
        });
      });
      this.el.hintPanel.appendChild(b);
    }
  }

  private renderSearchHits(hits: SearchHit[]): void {
    this.el.searchResults.innerHTML = "";
    for (const hit of hits) {
      const li = document.createElement("li");
      const subst = Object.entries(hit.substitution)
        .map(([k, v]) => `${k} := ${v}`)
        .join(", ");
      li.textContent = `${hit.slot}${hit.inferred ? " (inferred)" : ""} — ${subst}`;
      li.addEventListener("click", () => {
        void this.c.openHit(hit);
      });
      this.el.searchResults.appendChild(li);
    }
  }

  private renderAst(): void {
    const ast = this.c.state.ast;
    const panel = this.el.astPanel;
    panel.innerHTML = "";
    if (ast === null) return;
    for (const th of ast.theories) {
      const h = document.createElement("div");
      h.className = "theory";
      h.textContent = `theory ${th.name}`;
      panel.appendChild(h);
      for (const cd of th.constants) {
        const decl = document.createElement("div");
        decl.className = "constant";
        decl.textContent = cd.name;
        decl.addEventListener("click", () => {
          void this.relationBarFor(cd.nameRange);
        });
        panel.appendChild(decl);
        for (const comp of cd.components) {
          const label = document.createElement("div");
          label.className = "component";
          label.textContent = `${comp.kind}: ${comp.rendered ?? ""}`;
          panel.appendChild(label);
          this.renderTreeRows(comp.slot, comp.tree, panel);
        }
      }
    }
  }

  private renderTreeRows(slot: string, _tree: TreeNode, panel: HTMLElement): void {
    for (const row of this.c.rowsFor(slot)) {
      const div = document.createElement("div");
      div.className = "node" + (row.inferred ? " inferred" : "");
      div.style.paddingLeft = `${row.depth * 12 + 24}px`;
      const fold = row.hasChildren ? (row.folded ? "▸ " : "▾ ") : "· ";
      div.textContent = fold + row.label;
      if (this.c.astSelection?.slot === slot && this.c.astSelection.path === row.path) {
        div.classList.add("selected");
      }
      div.addEventListener("click", (ev) => {
        if ((ev.target as HTMLElement).closest(".node") !== div) return;
        if (ev.altKey && row.hasChildren) {
          this.c.toggleFoldAt(slot, row.path);
          return;
        }
        const node = this.findRow(slot, row.path);
        if (node !== null) this.c.selectAstNode(slot, node);
      });
      panel.appendChild(div);
    }
  }

  private findRow(slot: string, path: string): TreeNode | null {
    const ast = this.c.state.ast;
    if (ast === null) return null;
    for (const th of ast.theories) {
      for (const cd of th.constants) {
        for (const comp of cd.components) {
          if (comp.slot !== slot) continue;
          const stack = [comp.tree];
          while (stack.length > 0) {
            const n = stack.pop()!;
            if (n.path === path) return n;
            stack.push(...n.children);
          }
        }
      }
    }
    return null;
  }

  private async relationBarFor(nameRange: Span | null): Promise<void> {
    if (nameRange === null) return;
    const locs = await this.c.relationButtons(nameRange[0]);
    this.el.relationBar.innerHTML = "";
    if (locs === null) return;
    for (const loc of locs) {
      const b = document.createElement("button");
      b.textContent = loc.name;
      b.addEventListener("click", () => {
        void this.c.reveal(loc.uri, loc.range);
      });
      this.el.relationBar.appendChild(b);
    }
  }

  /** Context line under the selection, for debugging/bookkeeping. */
  selectionPreview(): string {
    const s = this.c.state;
    return s.selection === null ? "" : sliceSpan(s.text, s.selection);
  }
}
