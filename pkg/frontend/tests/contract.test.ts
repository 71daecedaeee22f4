import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { ENDPOINTS } from "../src/api.js";
import { defaultArchiveName } from "../src/names.js";

// the documented HTTP surface (docs/api.md); the console may use nothing else
const DOCUMENTED_ENDPOINTS = [
  "POST /api/login",
  "POST /api/logout",
  "GET /api/dialects",
  "GET /api/servers",
  "POST /api/connections/test",
  "GET /api/databases",
  "GET /api/databases/{db}/articles",
  "GET /api/databases/{db}/tables/{table}/rows",
  "POST /api/backup",
  "GET /api/archives",
  "GET /api/archives/{name}",
  "POST /api/restore/upload",
  "POST /api/restore",
];

const SRC = join(__dirname, "..", "src");

describe("console endpoint contract", () => {
  it("declares only documented endpoints", () => {
    expect([...Object.values(ENDPOINTS)].sort()).toEqual(
      [...DOCUMENTED_ENDPOINTS].sort(),
    );
  });

  it("no source file mentions an /api path outside the endpoint table", () => {
    for (const file of readdirSync(SRC)) {
      if (file === "api.ts") continue;
      const source = readFileSync(join(SRC, file), "utf-8");
      expect(source.includes("/api/"), `${file} must go through api.ts`).toBe(false);
      expect(source.includes("fetch("), `${file} must not fetch directly`).toBe(false);
    }
  });

  it("api.ts has a single fetch call site", () => {
    const source = readFileSync(join(SRC, "api.ts"), "utf-8");
    expect(source.match(/\bfetch\(/g)?.length).toBe(1);
  });
});

describe("default name prefill mirrors the server scheme", () => {
  it("matches the documented example", () => {
    const at = new Date(2009, 7, 13, 14, 30); // 13-08-2009 14:30 local
    expect(defaultArchiveName("SQL", "Users", at)).toBe(
      "SQL_Users_13-08-2009_14.30.xml",
    );
  });

  it("pads midnight", () => {
    const at = new Date(2020, 0, 2, 0, 0);
    expect(defaultArchiveName("D", "db", at)).toBe("D_db_02-01-2020_00.00.xml");
  });
});
