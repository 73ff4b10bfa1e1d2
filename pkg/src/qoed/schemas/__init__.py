"""JSON schemas of the files and payloads the command line emits."""
import json
from importlib import resources

SCHEMAS = ("bench", "bonus", "verify")


def load_schema(name: str) -> dict:
    if name not in SCHEMAS:
        raise KeyError(name)
    return json.loads(resources.files(__name__).joinpath(f"{name}.json").read_text("utf-8"))
