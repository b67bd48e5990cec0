// Small draft-07 checker for development builds.  It covers exactly the
// keyword subset the committed protocol schemas use ($ref into
// definitions, type, enum, const, required, properties,
// additionalProperties, items in both forms, minItems/maxItems, minimum,
// oneOf) and throws on anything else rather than silently passing.

export type Json =
  | null
  | boolean
  | number
  | string
  | Json[]
  | { [key: string]: Json };

export interface Schema {
  [key: string]: unknown;
}

const VALIDATION_KEYWORDS = new Set([
  "$ref",
  "type",
  "enum",
  "const",
  "required",
  "properties",
  "additionalProperties",
  "items",
  "minItems",
  "maxItems",
  "minimum",
  "oneOf",
  "definitions",
]);

const ANNOTATION_KEYWORDS = new Set(["$schema", "$id", "title", "description"]);

export class SchemaError extends Error {
  constructor(message: string, path: string) {
    super(`${path || "$"}: ${message}`);
    this.name = "SchemaError";
  }
}

function typeOf(value: Json): string {
  if (value === null) return "null";
  if (Array.isArray(value)) return "array";
  if (typeof value === "number") {
    return Number.isInteger(value) ? "integer" : "number";
  }
  return typeof value;
}

function typeMatches(declared: string, actual: string): boolean {
  // every integer is a number
  return declared === actual || (declared === "number" && actual === "integer");
}

function deepEqual(a: Json, b: Json): boolean {
  if (a === b) return true;
  if (Array.isArray(a) && Array.isArray(b)) {
    return a.length === b.length && a.every((x, i) => deepEqual(x, b[i]!));
  }
  if (
    a !== null &&
    b !== null &&
    typeof a === "object" &&
    typeof b === "object" &&
    !Array.isArray(a) &&
    !Array.isArray(b)
  ) {
    const ka = Object.keys(a).sort();
    const kb = Object.keys(b).sort();
    if (ka.length !== kb.length || ka.some((k, i) => k !== kb[i])) return false;
    return ka.every((k) => deepEqual(a[k]!, b[k]!));
  }
  return false;
}

function resolveRef(root: Schema, ref: string): Schema {
  if (!ref.startsWith("#/definitions/")) {
    throw new SchemaError(`unsupported $ref target: ${ref}`, "");
  }
  const name = ref.slice("#/definitions/".length);
  const defs = root["definitions"] as Record<string, Schema> | undefined;
  const target = defs?.[name];
  if (target === undefined) {
    throw new SchemaError(`missing definition: ${name}`, "");
  }
  return target;
}

function check(root: Schema, schema: Schema, value: Json, path: string): string[] {
  for (const key of Object.keys(schema)) {
    if (!VALIDATION_KEYWORDS.has(key) && !ANNOTATION_KEYWORDS.has(key)) {
      throw new SchemaError(`unsupported schema keyword: ${key}`, path);
    }
  }

  if (typeof schema["$ref"] === "string") {
    return check(root, resolveRef(root, schema["$ref"]), value, path);
  }

  if (Array.isArray(schema["oneOf"])) {
    const failures: string[][] = [];
    let matched = 0;
    for (const branch of schema["oneOf"] as Schema[]) {
      const errs = check(root, branch, value, path);
      if (errs.length === 0) matched += 1;
      else failures.push(errs);
    }
    if (matched === 1) return [];
    if (matched > 1) return [`${path}: matches ${matched} oneOf branches`];
    return [`${path}: matches no oneOf branch`, ...failures.flat()];
  }

  const errors: string[] = [];
  const actual = typeOf(value);

  if (typeof schema["type"] === "string") {
    if (!typeMatches(schema["type"], actual)) {
      return [`${path}: expected ${schema["type"]}, got ${actual}`];
    }
  }

  if (Array.isArray(schema["enum"])) {
    if (!(schema["enum"] as Json[]).some((v) => deepEqual(v, value))) {
      errors.push(`${path}: value not in enum`);
    }
  }
  if ("const" in schema && !deepEqual(schema["const"] as Json, value)) {
    errors.push(`${path}: value differs from const`);
  }
  if (typeof schema["minimum"] === "number" && typeof value === "number") {
    if (value < schema["minimum"]) {
      errors.push(`${path}: ${value} below minimum ${schema["minimum"]}`);
    }
  }

  if (actual === "array" && Array.isArray(value)) {
    if (typeof schema["minItems"] === "number" && value.length < schema["minItems"]) {
      errors.push(`${path}: fewer than ${schema["minItems"]} items`);
    }
    if (typeof schema["maxItems"] === "number" && value.length > schema["maxItems"]) {
      errors.push(`${path}: more than ${schema["maxItems"]} items`);
    }
    const items = schema["items"];
    if (Array.isArray(items)) {
      // tuple form: positional schemas
      items.forEach((sub, i) => {
        if (i < value.length) {
          errors.push(...check(root, sub as Schema, value[i]!, `${path}[${i}]`));
        }
      });
    } else if (items !== undefined) {
      value.forEach((item, i) => {
        errors.push(...check(root, items as Schema, item, `${path}[${i}]`));
      });
    }
  }

  if (actual === "object" && value !== null && typeof value === "object" && !Array.isArray(value)) {
    const obj = value as { [key: string]: Json };
    const props = (schema["properties"] ?? {}) as Record<string, Schema>;
    for (const name of (schema["required"] ?? []) as string[]) {
      if (!(name in obj)) errors.push(`${path}: missing required property ${name}`);
    }
    for (const [name, sub] of Object.entries(props)) {
      if (name in obj) {
        errors.push(...check(root, sub, obj[name]!, `${path}.${name}`));
      }
    }
    const extra = schema["additionalProperties"];
    if (extra === false) {
      for (const name of Object.keys(obj)) {
        if (!(name in props)) errors.push(`${path}: unexpected property ${name}`);
      }
    } else if (extra !== undefined && extra !== true) {
      for (const name of Object.keys(obj)) {
        if (!(name in props)) {
          errors.push(...check(root, extra as Schema, obj[name]!, `${path}.${name}`));
        }
      }
    }
  }

  return errors;
}

/** All violations of `value` against `schema`; empty when it conforms. */
export function validationErrors(schema: Schema, value: Json): string[] {
  return check(schema, schema, value, "$");
}

/** Throws SchemaError on the first violation. */
export function assertValid(schema: Schema, value: Json, label = ""): void {
  const errors = validationErrors(schema, value);
  if (errors.length > 0) {
    throw new SchemaError(errors.join("; "), label);
  }
}
