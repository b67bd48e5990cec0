// Wire types for the editor server protocol.  These mirror
// protocol/*.schema.json; the schemas stay the source of truth and the
// test suite validates live traffic against them.

export const PROTOCOL_VERSION = 1;

/** Half-open [start, end) span in codepoints within one file. */
export type Span = [number, number];

/** A span paired with an explicit file when it crosses document borders. */
export type FileSpan = [string, number, number];

export type ErrorCode =
  | "BadRequest"
  | "NotFound"
  | "StaleVersion"
  | "QueryParseError"
  | "UnknownMethod"
  | "InternalError";

export interface Diagnostic {
  range: Span | null;
  severity: string;
  message: string;
  log: string[];
}

export interface Hole {
  range: Span;
  expected: string | null;
  slot: string;
}

export interface DocState {
  uri: string;
  version: number;
  diagnostics: Diagnostic[];
  holes: Hole[];
}

export interface CompletionItem {
  label: string;
  kind: "hint" | "scope";
  insertText: string;
  remainingGoals?: number;
  range?: Span;
}

export interface CompletionsResult {
  uri: string;
  version: number;
  items: CompletionItem[];
}

export interface TermNode {
  k: "const" | "var" | "complex";
  name?: string;
  head?: string;
  bound?: ContextEntryNode[];
  args?: TermNode[];
  ref?: Span | FileSpan | null;
  inf?: true;
}

export interface ContextEntryNode {
  name: string;
  type: TermNode | null;
  def: TermNode | null;
  inferred: boolean;
}

export interface TypeAtResult {
  uri: string;
  version: number;
  type: string | null;
  term: TermNode | null;
}

export interface Location {
  uri: string;
  range: Span;
}

export interface DefinitionResult {
  uri: string;
  version: number;
  name: string;
  location: Location;
}

export interface RelatedLocation extends Location {
  name: string;
}

export interface RelatedResult {
  uri: string;
  version: number;
  element: string;
  locations: RelatedLocation[];
}

export interface SearchHit {
  slot: string;
  uri: string | null;
  range: Span | null;
  path: string;
  substitution: Record<string, string>;
  inferred: boolean;
}

export interface SearchResult {
  query: string;
  hits: SearchHit[];
}

/** Display tree for one term: labels, spans and inferred flags only. */
export interface TreeNode {
  label: string;
  range: Span | null;
  path: string;
  inferred: boolean;
  children: TreeNode[];
}

export interface ComponentAst {
  kind: "type" | "definiens";
  slot: string;
  range: Span | null;
  rendered: string | null;
  tree: TreeNode;
}

export interface ConstantAst {
  name: string;
  nameRange: Span | null;
  range: Span | null;
  components: ComponentAst[];
}

export interface TheoryAst {
  name: string;
  range: Span | null;
  includes: { target: string; range: Span | null }[];
  constants: ConstantAst[];
}

export interface AstResult {
  uri: string;
  version: number;
  theories: TheoryAst[];
}

export interface SubtermResult {
  uri: string;
  version: number;
  slot: string | null;
  range: Span | null;
  path: string | null;
}

export interface StatsResult {
  uri?: string;
  version?: number;
  openDocuments?: number;
  edits: number;
  reparsed: number;
  revalidated: number;
}

export interface InitializeResult {
  protocolVersion: number;
  methods: string[];
}

export interface Notification {
  method: string;
  params: { uri: string; range: Span | null };
}

export interface MethodResults {
  initialize: InitializeResult;
  didOpen: DocState;
  didChange: DocState;
  didClose: { uri: string; closed: boolean };
  typeAt: TypeAtResult;
  completionsAt: CompletionsResult;
  definitionAt: DefinitionResult;
  related: RelatedResult;
  search: SearchResult;
  astOf: AstResult;
  subtermAt: SubtermResult;
  stats: StatsResult;
  openLocation: { queued: boolean };
  pollNotifications: { notifications: Notification[] };
  shutdown: { ok: boolean };
}

export type MethodName = keyof MethodResults;

export class ServerError extends Error {
  readonly code: ErrorCode;
  readonly status: number;

  constructor(code: ErrorCode, message: string, status: number) {
    super(message);
    this.name = "ServerError";
    this.code = code;
    this.status = status;
  }
}
