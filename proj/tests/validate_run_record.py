"""Runs the CLI on a config and validates the resulting run.json against a JSON schema."""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def main() -> int:
    cli, config, schema_path = sys.argv[1:4]
    with tempfile.TemporaryDirectory() as out:
        proc = subprocess.run([cli, "run", config, "--out", out, "--quiet"], capture_output=True, text=True)
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            print(f"cli exited with {proc.returncode}", file=sys.stderr)
            return 1
        record = json.loads((Path(out) / "run.json").read_text(encoding="utf-8"))
    schema = json.loads(Path(schema_path).read_text(encoding="utf-8"))
    jsonschema.Draft202012Validator.check_schema(schema)
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(record), key=lambda e: list(e.path))
    for e in errors:
        print(f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}", file=sys.stderr)
    if errors:
        return 1
    print(f"{config}: run.json valid")
    return 0


if __name__ == "__main__":
    sys.exit(main())
