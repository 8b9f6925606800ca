"""The JSON schemas shipped in docs/schemas must stay in lockstep with
the artifacts the CLI actually writes.

Every command's artifact is generated once on the fast small system and
validated strictly (the schemas close additionalProperties, so a new or
renamed field fails here until the schema is updated with it).
"""

import json
import os

import pytest

jsonschema = pytest.importorskip("jsonschema")
referencing = pytest.importorskip("referencing")

from dyadic.cli import main  # noqa: E402

SCHEMA_DIR = os.path.join(os.path.dirname(__file__), "..", "docs", "schemas")


@pytest.fixture(scope="module")
def schemas():
    out = {}
    for name in ("run_config", "spectral_report", "certificate"):
        with open(os.path.join(SCHEMA_DIR, f"{name}.schema.json")) as fh:
            out[name] = json.load(fh)
    return out


@pytest.fixture(scope="module")
def registry(schemas):
    return referencing.Registry().with_resources(
        (s["$id"], referencing.Resource.from_contents(s))
        for s in schemas.values()
    )


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """One output directory holding every command's artifacts."""
    d = str(tmp_path_factory.mktemp("artifacts"))
    small = ["--lambda", "1.2", "--beta", "2.5", "--shells", "6"]
    assert main(["spectrum", "--out", d]) == 0
    assert main(["certify"] + small + ["--out", d]) == 0
    assert main(["construct"] + small + ["--out", d]) == 0
    assert main(["solve", "--shells", "2", "--t-end", "0.2",
                 "--forcing", "constant:1", "--out", d]) == 0
    assert main(["uniqueness", "--beta", "2", "--shells", "6,8",
                 "--rtol", "1e-8", "--out", d]) == 0
    return d


def _validate(schemas, registry, name, instance):
    validator = jsonschema.Draft202012Validator(schemas[name],
                                                registry=registry)
    errors = sorted(validator.iter_errors(instance),
                    key=lambda e: e.json_path)
    assert not errors, "\n".join(
        f"{e.json_path}: {e.message}" for e in errors[:10])


def test_spectral_report_artifact_validates(schemas, registry, artifacts):
    with open(os.path.join(artifacts, "spectral_report.json")) as fh:
        _validate(schemas, registry, "spectral_report", json.load(fh))


def test_certificate_artifact_validates(schemas, registry, artifacts):
    with open(os.path.join(artifacts, "certificate.json")) as fh:
        _validate(schemas, registry, "certificate", json.load(fh))


def test_every_config_echo_validates(schemas, registry, artifacts):
    reports = ("spectral_report", "certificate", "construction_report",
               "solve_report", "uniqueness_report")
    for fname in reports:
        with open(os.path.join(artifacts, fname + ".json")) as fh:
            art = json.load(fh)
        _validate(schemas, registry, "run_config", art["config"])


def test_csv_config_lines_validate(schemas, registry, artifacts):
    for csvname in ("solution.csv", "fields.csv", "u_plus.csv", "f.csv"):
        with open(os.path.join(artifacts, csvname)) as fh:
            line = fh.readline()
        assert line.startswith("# config: ")
        echo = json.loads(line[len("# config: "):])
        _validate(schemas, registry, "run_config", echo)


def test_schemas_reject_drifted_artifacts(schemas, registry, artifacts):
    """additionalProperties is closed: a renamed or injected field must
    fail validation rather than pass silently."""
    with open(os.path.join(artifacts, "certificate.json")) as fh:
        art = json.load(fh)
    validator = jsonschema.Draft202012Validator(schemas["certificate"],
                                                registry=registry)

    import copy
    corrupted = []
    c = copy.deepcopy(art)
    c["config"]["unknown_flag"] = 1.0
    corrupted.append(c)
    c = copy.deepcopy(art)
    c["certificate"]["passed"] = "yes"
    corrupted.append(c)
    c = copy.deepcopy(art)
    del c["certificate"]["gluing"]["rel"]
    corrupted.append(c)
    c = copy.deepcopy(art)
    c["certificate"]["spectral"]["rho_sign"] = 0
    corrupted.append(c)

    for c in corrupted:
        assert list(validator.iter_errors(c)), \
            "schema accepted a corrupted artifact"
