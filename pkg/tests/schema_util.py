import json
from importlib import resources

import jsonschema
from referencing import Registry, Resource

NAMES = (
    "operator.schema.json",
    "block_operator.schema.json",
    "word.schema.json",
    "report.schema.json",
    "trace.schema.json",
)


def _load(name):
    return json.loads(resources.files("unitary_factor").joinpath(f"schemas/{name}").read_text())


_REGISTRY = Registry().with_resources(
    (name, Resource.from_contents(_load(name))) for name in NAMES
)


def validate(instance, name):
    jsonschema.Draft202012Validator(_load(name), registry=_REGISTRY).validate(instance)
