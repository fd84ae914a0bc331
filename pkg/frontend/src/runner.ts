/**
 * Subprocess runner for the thermoloss CLI. Every binding call shells out
 * to one CLI invocation and parses the single JSON document it emits; this
 * package never imports the library's internals.
 *
 * The executable defaults to `python3 -m thermoloss`; set THERMOLOSS_BIN
 * to the path of a `thermoloss` entry point to invoke it directly.
 */

import { execFile } from "node:child_process";

export interface CliDocument {
  tool: string;
  version: string;
  command: string;
  config: Record<string, unknown>;
  result: Record<string, unknown>;
}

export class CliError extends Error {
  constructor(
    message: string,
    readonly exitCode: number,
    readonly stderr: string,
  ) {
    super(message);
    this.name = "CliError";
  }
}

// grads for large images can run to tens of megabytes of JSON
const MAX_BUFFER = 256 * 1024 * 1024;

function cliCommand(): { cmd: string; prefix: string[] } {
  const bin = process.env.THERMOLOSS_BIN;
  if (bin) return { cmd: bin, prefix: [] };
  return { cmd: "python3", prefix: ["-m", "thermoloss"] };
}

/**
 * Run one CLI command. Exit 0 (success) and exit 3 (completed without
 * convergence) both produce a document; anything else becomes a CliError
 * carrying the CLI's stderr line.
 */
export function runCli(args: string[]): Promise<{ doc: CliDocument; exitCode: number }> {
  const { cmd, prefix } = cliCommand();
  return new Promise((resolve, reject) => {
    execFile(cmd, [...prefix, ...args], { maxBuffer: MAX_BUFFER }, (err, stdout, stderr) => {
      let code = 0;
      if (err) {
        const raw = (err as NodeJS.ErrnoException & { code?: unknown }).code;
        code = typeof raw === "number" ? raw : -1;
      }
      if (code !== 0 && code !== 3) {
        reject(new CliError(`thermoloss exited with code ${code}: ${stderr.trim()}`, code, stderr));
        return;
      }
      try {
        resolve({ doc: JSON.parse(stdout) as CliDocument, exitCode: code });
      } catch (parseErr) {
        reject(new CliError(`thermoloss emitted unparseable output: ${parseErr}`, code, stderr));
      }
    });
  });
}
