/** Raised when an input file does not match the expected export schema. */
export class SchemaMismatch extends Error {
  readonly file: string;
  readonly column: string;

  constructor(file: string, column: string, problem: string) {
    super(`schema mismatch in ${file}: column "${column}" ${problem}`);
    this.name = "SchemaMismatch";
    this.file = file;
    this.column = column;
  }
}

/** Raised when a figure spec itself is malformed (bad kind, missing input path). */
export class InvalidSpec extends Error {
  constructor(message: string) {
    super(message);
    this.name = "InvalidSpec";
  }
}
