/**
 * Admin console: login -> connection -> action -> backup / restore screens.
 * Pure client of the HTTP API; the only business rule implemented here is
 * the record-under-checked-table dependency (see selection.ts).
 */

import { ApiClient, ArticleGroup } from "./api.js";
import { bannerText } from "./errors.js";
import { defaultArchiveName } from "./names.js";
import { SelectionViewState } from "./selection.js";

const client = new ApiClient("");
const selection = new SelectionViewState();

interface ConsoleState {
  dialect: string;
  server: string;
  connected: boolean;
  db: string;
}

const state: ConsoleState = { dialect: "", server: "", connected: false, db: "" };

const root = () => document.getElementById("app")!;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

function banner(kind: "ok" | "error", text: string): void {
  const area = document.getElementById("banner");
  if (!area) return;
  area.replaceChildren(el("div", { class: `banner ${kind}`, role: "status" }, text));
}

function clearBanner(): void {
  document.getElementById("banner")?.replaceChildren();
}

async function guarded(button: HTMLButtonElement | null, action: () => Promise<void>) {
  if (button) button.disabled = true;
  clearBanner();
  try {
    await action();
  } catch (err) {
    banner("error", bannerText(err));
  } finally {
    if (button) button.disabled = false;
  }
}

function page(title: string, ...children: (Node | string)[]): void {
  const header = el("header", {},
    el("h1", {}, "Backup & Restore Console"),
    el("h2", {}, title),
  );
  if (client.token) {
    const logout = el("button", { class: "logout" }, "Log out") as HTMLButtonElement;
    logout.onclick = () =>
      guarded(logout, async () => {
        await client.logout();
        state.connected = false;
        selection.clear();
        location.hash = "#/login";
      });
    header.append(logout);
  }
  root().replaceChildren(header, el("div", { id: "banner" }), ...children);
}

// --- screens ---------------------------------------------------------------

function loginScreen(): void {
  const user = el("input", { placeholder: "user name", autocomplete: "username" });
  const pass = el("input", { type: "password", placeholder: "password" });
  const go = el("button", {}, "Log in") as HTMLButtonElement;
  go.onclick = () =>
    guarded(go, async () => {
      await client.login(user.value, pass.value);
      location.hash = "#/connect";
    });
  page("Log in", el("div", { class: "form" }, user, pass, go));
}

async function connectScreen(): Promise<void> {
  const dialects = await client.dialects();
  const dialectPick = el("select", { id: "dialect" });
  dialectPick.append(...dialects.map((d) => el("option", { value: d }, d)));
  const serverPick = el("select", { id: "server" });
  const user = el("input", { placeholder: "user name" });
  const pass = el("input", { type: "password", placeholder: "password" });
  const test = el("button", {}, "Test") as HTMLButtonElement;

  async function refreshServers() {
    const names = await client.servers(dialectPick.value);
    serverPick.replaceChildren(...names.map((s) => el("option", { value: s }, s)));
  }
  dialectPick.onchange = () => refreshServers().catch((e) => banner("error", bannerText(e)));

  test.onclick = () =>
    guarded(test, async () => {
      const result = await client.testConnection({
        dialect: dialectPick.value,
        server: serverPick.value,
        user: user.value,
        password: pass.value,
      });
      if (result.ok) {
        state.dialect = dialectPick.value;
        state.server = serverPick.value;
        state.connected = true;
        banner("ok", "Connection successfully built.");
        location.hash = "#/action";
      } else {
        banner("error", `Connection failed: ${result.reason ?? "unknown reason"}`);
      }
    });

  page(
    "Connection",
    el("div", { class: "form" },
      el("label", {}, "DBMS", dialectPick),
      el("label", {}, "Server", serverPick),
      user, pass, test),
  );
  await refreshServers();
}

async function actionScreen(): Promise<void> {
  const dbs = await client.databases();
  const dbPick = el("select", {});
  dbPick.append(...dbs.map((d) => el("option", { value: d }, d)));
  if (state.db) dbPick.value = state.db;

  const partial = el("button", {}, "Partial Backup") as HTMLButtonElement;
  const full = el("button", {}, "Full Backup") as HTMLButtonElement;
  const restore = el("button", {}, "Restore") as HTMLButtonElement;
  partial.onclick = () => {
    state.db = dbPick.value;
    selection.clear();
    location.hash = "#/backup";
  };
  full.onclick = () =>
    guarded(full, async () => {
      state.db = dbPick.value;
      const report = await client.backup({
        db_name: state.db,
        mode: "full",
        output_name: nameInputValue(),
      });
      banner("ok", `Backup Completed: ${report.archive_name}`);
    });
  restore.onclick = () => {
    state.db = dbPick.value;
    location.hash = "#/restore";
  };

  const nameInput = el("input", {
    id: "archive-name",
    value: defaultArchiveName(state.dialect, dbPick.value || "db"),
  });
  dbPick.onchange = () => {
    nameInput.value = defaultArchiveName(state.dialect, dbPick.value);
  };
  function nameInputValue(): string {
    return nameInput.value.trim();
  }

  page(
    "Action",
    el("div", { class: "form" },
      el("label", {}, "Database", dbPick),
      el("label", {}, "Backup file name", nameInput),
      el("div", { class: "row" }, partial, full, restore)),
  );
}

function groupBox(group: ArticleGroup, onTableOpen: (t: string) => void): HTMLElement {
  const box = el("fieldset", { class: group.empty ? "group gray" : "group" });
  box.append(el("legend", {}, `${group.kind}s`));
  if (group.empty) {
    box.append(el("p", { class: "muted" }, "no items"));
    return box;
  }
  for (const item of group.items) {
    const check = el("input", { type: "checkbox" }) as HTMLInputElement;
    check.checked = selection.isArticleChecked(group.kind, item.name);
    check.onchange = () => {
      selection.toggleArticle(group.kind, item.name, check.checked);
      renderCurrent(); // record checkboxes under this table must follow
    };
    const label = el("label", { class: "item" }, check, item.name);
    if (group.kind === "Table") {
      if ((item.row_count ?? 0) > 0) {
        const open = el("button", { class: "link" }, `records (${item.row_count})`) as HTMLButtonElement;
        open.onclick = () => onTableOpen(item.name);
        label.append(open);
      } else {
        label.append(el("span", { class: "muted" }, " (empty table)"));
      }
    }
    box.append(label);
  }
  return box;
}

async function backupScreen(): Promise<void> {
  const groups = await client.articles(state.db);
  const nameInput = el("input", {
    value: defaultArchiveName(state.dialect, state.db),
  });
  const recordsArea = el("div", { id: "records" });

  async function openTable(table: string) {
    if (!selection.isArticleChecked("Table", table)) {
      banner("error", "Check the table first; records under an unchecked table are meaningless.");
      return;
    }
    const data = await client.tableRows(state.db, table, true);
    const box = el("fieldset", { class: "group" },
      el("legend", {}, `records of ${table}`));
    const all = el("input", { type: "checkbox" }) as HTMLInputElement;
    all.checked = selection.hasAllRecords(table);
    all.onchange = () => {
      selection.setAllRecords(table, all.checked);
      openTable(table).catch((e) => banner("error", bannerText(e)));
    };
    box.append(el("label", { class: "item" }, all, "all records"));
    for (const key of data.rows) {
      const check = el("input", { type: "checkbox" }) as HTMLInputElement;
      check.checked = selection.isRecordChecked(table, key);
      check.disabled = selection.hasAllRecords(table);
      check.onchange = () => {
        if (!selection.toggleRecord(table, key, check.checked)) {
          check.checked = false;
        }
      };
      box.append(el("label", { class: "item" }, check, JSON.stringify(key)));
    }
    recordsArea.replaceChildren(box);
  }

  const run = el("button", {}, "Backup") as HTMLButtonElement;
  run.onclick = () =>
    guarded(run, async () => {
      const report = await client.backup({
        db_name: state.db,
        mode: "partial",
        selection: selection.toWire(),
        output_name: nameInput.value.trim() || undefined,
      });
      banner("ok", `Backup Completed: ${report.archive_name}`);
    });

  page(
    `Partial backup of ${state.db}`,
    el("div", { class: "groups" },
      ...groups.map((g) => groupBox(g, (t) => void openTable(t)))),
    recordsArea,
    el("div", { class: "form" },
      el("label", {}, "Backup file name", nameInput), run),
  );
}

async function restoreScreen(): Promise<void> {
  const dbs = await client.databases();
  const modePick = el("select", {});
  for (const mode of ["partial-exist", "partial-new", "full-exist", "full-new", "merge"]) {
    modePick.append(el("option", { value: mode }, mode));
  }
  const dbPick = el("select", {});
  dbPick.append(...dbs.map((d) => el("option", { value: d }, d)));
  const newName = el("input", { placeholder: "new database name" });
  const file = el("input", { type: "file", accept: ".xml" }) as HTMLInputElement;
  const run = el("button", {}, "Restore") as HTMLButtonElement;

  run.onclick = () =>
    guarded(run, async () => {
      const chosen = file.files?.[0];
      if (!chosen) {
        banner("error", "Choose a backup file to upload.");
        return;
      }
      const mode = modePick.value;
      const target = mode.endsWith("-new") ? newName.value.trim() : dbPick.value;
      const staged = await client.uploadArchive(chosen.name, chosen);
      const report = await client.restore({ mode, db_name: target, staged });
      banner("ok", `Restore completed into ${report.db_name}.`);
    });

  page(
    "Restore",
    el("div", { class: "form" },
      el("label", {}, "Mode", modePick),
      el("label", {}, "Existing database", dbPick),
      el("label", {}, "New database name", newName),
      el("label", {}, "Backup file", file),
      run),
  );
}

// --- routing -----------------------------------------------------------------

let current = "";

function renderCurrent(): void {
  void route(current || "#/login");
}

async function route(hash: string): Promise<void> {
  current = hash;
  if (!client.token && hash !== "#/login") {
    location.hash = "#/login";
    return;
  }
  try {
    switch (hash) {
      case "#/login":
        loginScreen();
        break;
      case "#/connect":
        await connectScreen();
        break;
      case "#/action":
        state.connected ? await actionScreen() : (location.hash = "#/connect");
        break;
      case "#/backup":
        state.db ? await backupScreen() : (location.hash = "#/action");
        break;
      case "#/restore":
        state.connected ? await restoreScreen() : (location.hash = "#/connect");
        break;
      default:
        location.hash = "#/login";
    }
  } catch (err) {
    page("Problem");
    banner("error", bannerText(err));
  }
}

export function start(): void {
  window.addEventListener("hashchange", () => void route(location.hash));
  void route(location.hash || "#/login");
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  start();
}
