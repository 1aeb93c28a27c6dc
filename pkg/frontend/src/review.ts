// Label review queue: load the CLI `flag` output, record analyst decisions,
// export a labels CSV ready for training.

export interface FlaggedRow {
  username: string;
  score: number;
  firedRules: string[];
  isBot: boolean;
}

export interface RowDiagnostic {
  line: number; // 1-based line number in the uploaded file
  message: string;
}

export interface ParsedUpload {
  rows: FlaggedRow[];
  diagnostics: RowDiagnostic[];
}

export type Decision = "bot" | "human" | "skip";

const EXPECTED_HEADER = ["username", "score", "fired_rules", "is_bot"];

/**
 * Parse the review-queue upload. Malformed rows are rejected individually
 * and reported with their line number; a wrong header rejects the file.
 */
export function parseFlaggedCsv(text: string): ParsedUpload {
  const lines = text.split(/\r?\n/);
  const rows: FlaggedRow[] = [];
  const diagnostics: RowDiagnostic[] = [];

  const header = (lines[0] ?? "").split(",").map((c) => c.trim().toLowerCase());
  if (header.join(",") !== EXPECTED_HEADER.join(",")) {
    diagnostics.push({
      line: 1,
      message: `expected header '${EXPECTED_HEADER.join(",")}', got '${lines[0] ?? ""}'`,
    });
    return { rows, diagnostics };
  }

  for (let i = 1; i < lines.length; i++) {
    const raw = lines[i];
    if (raw.trim() === "") {
      continue;
    }
    const lineNo = i + 1;
    const cells = raw.split(",").map((c) => c.trim());
    if (cells.length !== 4) {
      diagnostics.push({ line: lineNo, message: `expected 4 columns, got ${cells.length}` });
      continue;
    }
    const [username, scoreText, rulesText, botText] = cells;
    if (username === "") {
      diagnostics.push({ line: lineNo, message: "empty username" });
      continue;
    }
    const score = Number(scoreText);
    if (!Number.isFinite(score)) {
      diagnostics.push({ line: lineNo, message: `score '${scoreText}' is not a number` });
      continue;
    }
    if (botText !== "true" && botText !== "false") {
      diagnostics.push({ line: lineNo, message: `is_bot '${botText}' is not true/false` });
      continue;
    }
    rows.push({
      username,
      score,
      firedRules: rulesText === "" ? [] : rulesText.split(";"),
      isBot: botText === "true",
    });
  }
  return { rows, diagnostics };
}

/** Decision log for one session: entries only accumulate, latest one wins. */
export class ReviewQueue {
  readonly rows: FlaggedRow[];
  private readonly log: Array<{ username: string; decision: Decision }> = [];
  private readonly current = new Map<string, Decision>();

  constructor(rows: FlaggedRow[]) {
    this.rows = rows;
  }

  decide(username: string, decision: Decision): void {
    this.log.push({ username, decision });
    this.current.set(username, decision);
  }

  decisionFor(username: string): Decision | undefined {
    return this.current.get(username);
  }

  decidedCount(): number {
    return this.current.size;
  }

  historyLength(): number {
    return this.log.length;
  }

  /** Labels CSV with every non-skip decision, in queue order. */
  exportCsv(): string {
    const out = ["username,label"];
    for (const row of this.rows) {
      const decision = this.current.get(row.username);
      if (decision === "bot" || decision === "human") {
        out.push(`${row.username},${decision}`);
      }
    }
    return out.join("\n") + "\n";
  }
}

export function renderReviewQueue(
  container: HTMLElement,
  upload: ParsedUpload,
  queue: ReviewQueue,
  onInspect: (username: string) => void,
): void {
  container.replaceChildren();

  if (upload.diagnostics.length > 0) {
    const banner = document.createElement("div");
    banner.className = "banner diagnostics";
    const intro = document.createElement("p");
    intro.textContent = `${upload.diagnostics.length} problem(s) in the uploaded file:`;
    banner.appendChild(intro);
    const list = document.createElement("ul");
    for (const diag of upload.diagnostics) {
      const item = document.createElement("li");
      item.className = "diagnostic";
      item.textContent = `line ${diag.line}: ${diag.message}`;
      list.appendChild(item);
    }
    banner.appendChild(list);
    container.appendChild(banner);
  }

  if (upload.rows.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "nothing to review";
    return void container.appendChild(empty);
  }

  const table = document.createElement("table");
  table.className = "review-table";
  const head = document.createElement("tr");
  for (const label of ["account", "score", "rules", "decision", ""]) {
    const th = document.createElement("th");
    th.textContent = label;
    head.appendChild(th);
  }
  table.appendChild(head);

  for (const row of upload.rows) {
    const tr = document.createElement("tr");
    tr.className = "review-row";
    tr.dataset.username = row.username;

    const name = document.createElement("td");
    name.textContent = row.username;
    tr.appendChild(name);

    const score = document.createElement("td");
    score.textContent = String(row.score);
    tr.appendChild(score);

    const rules = document.createElement("td");
    rules.textContent = row.firedRules.join(", ");
    tr.appendChild(rules);

    const decisionCell = document.createElement("td");
    decisionCell.className = "decision-cell";
    const state = document.createElement("span");
    state.className = "decision-state";
    state.textContent = queue.decisionFor(row.username) ?? "undecided";
    decisionCell.appendChild(state);
    for (const decision of ["bot", "human", "skip"] as Decision[]) {
      const button = document.createElement("button");
      button.className = `decide-${decision}`;
      button.textContent = decision;
      button.addEventListener("click", () => {
        queue.decide(row.username, decision);
        state.textContent = decision;
      });
      decisionCell.appendChild(button);
    }
    tr.appendChild(decisionCell);

    const inspect = document.createElement("td");
    const button = document.createElement("button");
    button.className = "inspect";
    button.textContent = "inspect";
    button.addEventListener("click", () => onInspect(row.username));
    inspect.appendChild(button);
    tr.appendChild(inspect);

    table.appendChild(tr);
  }
  container.appendChild(table);
}
