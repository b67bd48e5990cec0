// Test scaffolding: fixture texts, a scratch project directory and a
// live `logon serve` subprocess per suite.

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, mkdirSync, readFileSync, writeFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO_ROOT = resolve(HERE, "..", "..");
const FIXTURES = join(REPO_ROOT, "src", "logon", "fixtures");
export const PROTOCOL_DIR = join(REPO_ROOT, "protocol");

export const LF = readFileSync(join(FIXTURES, "lf.mmt"), "utf-8");
export const PL = readFileSync(join(FIXTURES, "pl.mmt"), "utf-8");

export const HOLE_PL = PL.replace(
  "= [A] impI [p] andI p p",
  "= [A] ⟨ded (A ⟹ (A ∧ A))⟩",
);

// the faulty equivalence connective: its definiens ends in a bare `ded`
export const BAD_PL = PL.replace(
  "  example : {A} ded (A ⟹ (A ∧ A)) = [A] impI [p] andI p p ❙",
  "  equiv : prop → prop → prop = [x] [y] (x ⟹ y) ∧ ded ❙\n" +
    "  example : {A} ded (A ⟹ (A ∧ A)) = [A] impI [p] andI p p ❙",
);

if (HOLE_PL === PL || BAD_PL === PL) {
  throw new Error("fixture edits did not apply; pl.mmt changed?");
}

export function makeProject(): string {
  const dir = mkdtempSync(join(tmpdir(), "logon-web-"));
  mkdirSync(join(dir, "source"), { recursive: true });
  writeFileSync(join(dir, "source", "lf.mmt"), LF, "utf-8");
  writeFileSync(join(dir, "source", "pl.mmt"), PL, "utf-8");
  return dir;
}

export interface LiveServer {
  baseUrl: string;
  projectDir: string;
  stop(): Promise<void>;
}

/** Spawns `logon serve <project> --port 0` and waits for its address line. */
export async function startServer(projectDir?: string): Promise<LiveServer> {
  const dir = projectDir ?? makeProject();
  const ownsDir = projectDir === undefined;
  const proc: ChildProcess = spawn("logon", ["serve", dir, "--port", "0"], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  const baseUrl = await new Promise<string>((resolvePort, reject) => {
    let out = "";
    let err = "";
    const timer = setTimeout(
      () => reject(new Error(`server did not start: ${out} ${err}`)),
      20000,
    );
    proc.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString("utf-8");
      const m = out.match(/listening on (http:\/\/[^\s]+)/);
      if (m !== null) {
        clearTimeout(timer);
        resolvePort(m[1]!);
      }
    });
    proc.stderr!.on("data", (chunk: Buffer) => {
      err += chunk.toString("utf-8");
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (${code}): ${err}`));
    });
  });
  return {
    baseUrl,
    projectDir: dir,
    stop: () =>
      new Promise<void>((done) => {
        proc.once("exit", () => {
          if (ownsDir) rmSync(dir, { recursive: true, force: true });
          done();
        });
        proc.kill("SIGINT");
        setTimeout(() => proc.kill("SIGKILL"), 3000).unref();
      }),
  };
}

/** Codepoint offset of `needle` within `text` (String.indexOf is UTF-16). */
export function cpIndexOf(text: string, needle: string, from = 0): number {
  const idx = text.indexOf(needle, from);
  if (idx < 0) throw new Error(`needle not found: ${needle}`);
  return Array.from(text.slice(0, idx)).length;
}

export function cpSlice(text: string, start: number, end: number): string {
  return Array.from(text).slice(start, end).join("");
}
