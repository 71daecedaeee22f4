/** Maps the service's closed error-code set to banner text. */

import { ApiError } from "./api.js";

export const ERROR_TEXT: Record<string, string> = {
  AUTH_FAILED: "Wrong user name or password. Please enter a correct user name and password.",
  AUTH_REQUIRED: "Your session has ended. Please log in again.",
  CONNECTION_REQUIRED: "Connect to a server first (use the Test button).",
  SELECTION_INVALID: "The selection is not valid. Records can only be chosen under a checked table.",
  NOT_A_BACKUP_FILE: "Restore Failed: the chosen XML is not a backup file.",
  MALFORMED_DOCUMENT: "Restore Failed: the file is damaged or not well-formed.",
  CHECKSUM_MISMATCH: "Restore Failed: the backup file is damaged (checksum mismatch).",
  UNSUPPORTED_VERSION: "Restore Failed: this backup file version is not supported.",
  MALFORMED_HEX: "Restore Failed: the file contains invalid binary data.",
  MISSING_ARGUMENT: "Internal request error: a statement argument is missing.",
  EXTRA_ARGUMENT: "Internal request error: an unexpected statement argument was sent.",
  ILLEGAL_IDENTIFIER: "That name contains characters that are not allowed.",
  MALFORMED_REQUEST: "The request was not understood. Refresh the page and try again.",
  DIALECT_MISMATCH: "Restore Failed: this backup belongs to a different DBMS.",
  DATABASE_EXISTS: "A database with that name already exists.",
  CONSTRAINT_VIOLATION: "Restore Failed: the data violates a constraint in the target database.",
  SESSION_CLOSED: "The server connection was closed. Test the connection again.",
  UNKNOWN_DATABASE: "That database (or archive) does not exist.",
  UNKNOWN_ARTICLE: "A selected item no longer exists in the database.",
  MISSING_STATEMENT: "This operation is not available for the chosen DBMS.",
  ADAPTER_UNAVAILABLE: "No live driver is configured for the chosen DBMS.",
  CATALOG_PARSE: "Server problem: the statement catalog failed to load.",
  DUPLICATE_STATEMENT: "Server problem: the statement catalog is inconsistent.",
  SNAPSHOT_FAILED: "Backup failed while reading the database.",
  SINK_WRITE_FAILED: "Backup failed: the archive could not be written.",
  STAGING_WRITE_FAILED: "Upload failed: the file could not be staged on the server.",
  CONFIG_ERROR: "Server problem: bad configuration.",
  INTERNAL: "Something went wrong on the server.",
};

export function bannerText(error: unknown): string {
  if (error instanceof ApiError) {
    return ERROR_TEXT[error.code] ?? `${error.code}: ${error.message}`;
  }
  return error instanceof Error ? error.message : String(error);
}
