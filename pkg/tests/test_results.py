"""Persistence round-trips, schema validation, and manifest hashing."""

import math

import pytest

from pbcert.results import (
    SCHEMAS,
    SchemaError,
    config_hash,
    read_manifest,
    read_table,
    write_manifest,
    write_table,
)


def test_write_read_round_trip(tmp_path):
    rows = [
        (0.0, 0, 0.5, 0.02, 1.05510021797, 1.0551012425606014, math.nan, math.nan),
        (0.24, 24, 0.0523986081, 5.122923364e-07, 0.1047972163, 0.10479824088, 0.9866, 0.0067),
    ]
    path = tmp_path / "toy_fig1.csv"
    write_table(path, "toy_fig1", rows)
    back = read_table(path, "toy_fig1")
    assert len(back) == 2
    for rec, row in zip(back, rows):
        for name, val in zip(SCHEMAS["toy_fig1"], row):
            if isinstance(val, float) and math.isnan(val):
                assert isinstance(rec[name], float) and math.isnan(rec[name])
            else:
                assert rec[name] == val


def test_write_table_rejects_width_mismatch(tmp_path):
    with pytest.raises(SchemaError):
        write_table(tmp_path / "x.csv", "l2_sweep", [(0.0, 1, 2.0)])


def test_read_table_names_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("alpha,seed,d_prefix\n0.0,1,0.5\n")
    with pytest.raises(SchemaError, match="d_ghost"):
        read_table(path, "l2_sweep")


def test_unknown_schema_rejected(tmp_path):
    with pytest.raises(SchemaError):
        write_table(tmp_path / "x.csv", "mystery", [])


def test_config_hash_changes_with_any_grid():
    base = {"alpha_grid": [0.0, 0.5], "sigma_p_grid": [1e-4, 1e-3], "seeds": [0, 1]}
    h = config_hash(base)
    assert config_hash({**base, "alpha_grid": [0.0, 0.6]}) != h
    assert config_hash({**base, "sigma_p_grid": [1e-4]}) != h
    assert config_hash({**base, "seeds": [0, 2]}) != h
    # key order does not matter
    assert config_hash(dict(reversed(list(base.items())))) == h


def test_manifest_round_trip(tmp_path):
    cfg = {"alpha_grid": [0.0], "delta": 0.05}
    m = write_manifest(
        tmp_path / "manifest.json", cfg,
        grids={"alpha": [0.0]},
        delta_accounting={"delta": 0.05, "delta_mc": 0.025},
        seeds=[0, 1, 2],
    )
    back = read_manifest(tmp_path / "manifest.json")
    assert back == m
    assert back["config_hash"] == config_hash(cfg)
    assert back["seeds"] == [0, 1, 2]
    assert isinstance(back["code_version"], str) and back["code_version"]


def test_tables_are_byte_stable(tmp_path):
    rows = [(0.4, 3, 0.001234, 0.005678)]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_table(a, "l2_sweep", rows)
    write_table(b, "l2_sweep", rows)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("schema", sorted(SCHEMAS))
def test_round_trip_identity_for_every_schema(tmp_path, schema):
    cols = SCHEMAS[schema]
    rows = [
        tuple(0.1 * (i + 1) * (j + 1) if j % 3 else i + j for j in range(len(cols)))
        for i in range(3)
    ]
    path = tmp_path / f"{schema}.csv"
    write_table(path, schema, rows)
    back = read_table(path, schema)
    for rec, row in zip(back, rows):
        assert tuple(rec[c] for c in cols) == row
