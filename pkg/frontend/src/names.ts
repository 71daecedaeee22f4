/** Client-side mirror of the server's default archive naming scheme,
 * used to prefill the file-name input on the backup screens. */

function pad(n: number): string {
  return n.toString().padStart(2, "0");
}

export function defaultArchiveName(
  dialect: string,
  dbName: string,
  at: Date = new Date(),
): string {
  const date = `${pad(at.getDate())}-${pad(at.getMonth() + 1)}-${at.getFullYear()}`;
  const time = `${pad(at.getHours())}.${pad(at.getMinutes())}`;
  return `${dialect}_${dbName}_${date}_${time}.xml`;
}
