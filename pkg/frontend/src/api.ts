/**
 * Typed client for the backup service API. Every request in the console
 * goes through this module; the endpoint table below is the complete list
 * of paths the console is allowed to touch (guarded by a contract test).
 */

export const ENDPOINTS = {
  login: "POST /api/login",
  logout: "POST /api/logout",
  dialects: "GET /api/dialects",
  servers: "GET /api/servers",
  testConnection: "POST /api/connections/test",
  databases: "GET /api/databases",
  articles: "GET /api/databases/{db}/articles",
  rows: "GET /api/databases/{db}/tables/{table}/rows",
  backup: "POST /api/backup",
  archives: "GET /api/archives",
  download: "GET /api/archives/{name}",
  upload: "POST /api/restore/upload",
  restore: "POST /api/restore",
} as const;

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ColumnInfo {
  name: string;
  type: string;
  nullable: boolean;
  key: boolean;
}

export interface ArticleGroup {
  kind: string;
  empty: boolean;
  items: { name: string; row_count?: number }[];
}

export interface SelectionWire {
  articles: { kind: string; name: string }[];
  record_keys: Record<string, unknown[][]>;
  select_all_records: string[];
}

export interface BackupReport {
  archive_name: string;
  primary_path: string;
  checksum: string;
  counts: Record<string, number>;
  total_rows: number;
  remote_delivered: boolean;
  [extra: string]: unknown;
}

export interface RestoreReport {
  mode: string;
  db_name: string;
  atomic: boolean;
  added: Record<string, number>;
  replaced: Record<string, number>;
  kept: Record<string, number>;
  removed: Record<string, number>;
  [extra: string]: unknown;
}

function fill(template: string, params: Record<string, string>): string {
  return template.replace(/\{(\w+)\}/g, (_, name: string) =>
    encodeURIComponent(params[name] ?? ""),
  );
}

export class ApiClient {
  token: string | null = null;

  constructor(private baseUrl: string = "") {}

  private async request(
    endpoint: string,
    options: {
      params?: Record<string, string>;
      query?: Record<string, string>;
      json?: unknown;
      form?: FormData;
      binary?: boolean;
    } = {},
  ): Promise<any> {
    const [method, template] = endpoint.split(" ", 2);
    let url = this.baseUrl + fill(template, options.params ?? {});
    if (options.query) {
      url += "?" + new URLSearchParams(options.query).toString();
    }
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let body: BodyInit | undefined;
    if (options.json !== undefined) {
      headers["Content-Type"] = "application/json";
      body = JSON.stringify(options.json);
    } else if (options.form) {
      body = options.form;
    }
    const response = await fetch(url, { method, headers, body });
    if (!response.ok) {
      let code = "INTERNAL";
      let message = `HTTP ${response.status}`;
      try {
        const data = await response.json();
        if (data && typeof data.code === "string") {
          code = data.code;
          message = data.message ?? message;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(code, message, response.status);
    }
    if (options.binary) {
      return new Uint8Array(await response.arrayBuffer());
    }
    return response.json();
  }

  async login(username: string, password: string): Promise<void> {
    const data = await this.request(ENDPOINTS.login, {
      json: { username, password },
    });
    this.token = data.token;
  }

  async logout(): Promise<number> {
    const data = await this.request(ENDPOINTS.logout, { json: {} });
    this.token = null;
    return data.closed;
  }

  async dialects(): Promise<string[]> {
    return (await this.request(ENDPOINTS.dialects)).dialects;
  }

  async servers(dialect: string): Promise<string[]> {
    return (await this.request(ENDPOINTS.servers, { query: { dialect } })).servers;
  }

  async testConnection(spec: {
    dialect: string;
    server: string;
    user?: string;
    password?: string;
  }): Promise<{ ok: boolean; reason: string | null }> {
    return this.request(ENDPOINTS.testConnection, { json: spec });
  }

  async databases(): Promise<string[]> {
    return (await this.request(ENDPOINTS.databases)).databases;
  }

  async articles(db: string): Promise<ArticleGroup[]> {
    return (await this.request(ENDPOINTS.articles, { params: { db } })).groups;
  }

  async tableRows(
    db: string,
    table: string,
    keysOnly = false,
  ): Promise<{ columns: ColumnInfo[]; rows: unknown[][] }> {
    return this.request(ENDPOINTS.rows, {
      params: { db, table },
      query: { keys_only: keysOnly ? "true" : "false" },
    });
  }

  async backup(body: {
    db_name: string;
    mode: "partial" | "full";
    selection?: SelectionWire;
    output_name?: string;
  }): Promise<BackupReport> {
    return this.request(ENDPOINTS.backup, { json: body });
  }

  async archives(): Promise<{ name: string; size: number }[]> {
    return (await this.request(ENDPOINTS.archives)).archives;
  }

  async downloadArchive(name: string): Promise<Uint8Array> {
    return this.request(ENDPOINTS.download, { params: { name }, binary: true });
  }

  async uploadArchive(fileName: string, data: Uint8Array | Blob): Promise<string> {
    const form = new FormData();
    const blob = data instanceof Blob ? data : new Blob([data as BlobPart]);
    form.append("file", blob, fileName);
    return (await this.request(ENDPOINTS.upload, { form })).staged;
  }

  async restore(body: {
    mode: string;
    db_name: string;
    staged?: string;
    archive?: string;
  }): Promise<RestoreReport> {
    return this.request(ENDPOINTS.restore, { json: body });
  }
}
